use super::*;
use crate::geometry::{clip_segments_to_cube, delaunay_triangulate};
use crate::lattice::{site_from_local, validate_params, ModelParams};

fn params(variant: Variant, m: f64, b_inv: u32, l: f64, rho: f64) -> ValidatedParams {
    validate_params(&ModelParams {
        m,
        b_inv,
        l,
        rho,
        variant,
        w0: 0.1,
        eta: 1e-6,
        ..ModelParams::default()
    })
    .unwrap()
}

fn small(variant: Variant) -> (ValidatedParams, Environment) {
    let p = params(variant, 1.0, 5, 1.0, 0.3);
    let env = build_environment(&p, BlockRange::new([-2, -2], [2, 2]), 11).unwrap();
    (p, env)
}

#[test]
fn masses_respect_cap() {
    let (p, env) = small(Variant::Capped);
    assert!(env.max_mass() <= p.rho);
    for bs in env.blocks() {
        for (m, t) in bs.mass.iter().zip(&bs.total) {
            assert_eq!(*m, t.min(p.rho));
        }
    }
}

#[test]
fn matches_naive_clipping_oracle() {
    // Independent route: full sorted triangulation, clip every edge against
    // each global site cube.
    for variant in [Variant::DelGrid, Variant::Capped, Variant::Del] {
        let p = params(variant, 2.0, 9, 1.0, 10.0);
        let window = BlockRange::new([-1, -1], [1, 1]);
        let env = build_environment(&p, window, 5).unwrap();
        let pts = vertex_set(&p, &env.y_rect(), env.yfield());
        let tri = delaunay_triangulate(&pts).unwrap();
        let edges: Vec<Segment> = tri.edge_segments().collect();
        for z in window.iter() {
            for idx in 0..p.sites_per_block() {
                let k = site_from_local(z, idx, p.b_inv);
                let s = env.site(k).unwrap();
                let (pieces, len) = clip_segments_to_cube(&edges, &s.global_cube());
                assert!(
                    (s.total_length - len).abs() <= 1e-9,
                    "{variant} {k:?}: {} vs {len}",
                    s.total_length
                );
                assert_eq!(s.segments.len(), pieces.len());
            }
        }
    }
}

#[test]
fn pure_grid_closed_form() {
    let mut mp = ModelParams {
        m: 1.0,
        b_inv: 5,
        l: 1.0,
        rho: 10.0,
        variant: Variant::DelGrid,
        ..ModelParams::default()
    };
    mp.lambda_del = 1e-300;
    let p = validate_params(&mp).unwrap();
    let env = build_environment(&p, BlockRange::new([0, 0], [0, 0]), 3).unwrap();
    let d = 0.2 * std::f64::consts::SQRT_2;
    for j in 0..5i64 {
        for i in 0..5i64 {
            let mut want = 0.0;
            if i == 0 {
                want += 0.2;
            }
            if j == 0 {
                want += 0.2;
            }
            if i + j == 4 {
                want += d;
            }
            let got = env.site([i, j]).unwrap().mass;
            assert!((got - want).abs() < 1e-12, "site ({i},{j}) {got} {want}");
        }
    }
}

#[test]
fn translation_covariance() {
    let p = params(Variant::Capped, 2.0, 9, 1.0, 0.7);
    let w = BlockRange::new([0, 0], [1, 1]);
    let a = build_environment(&p, w, 9).unwrap();
    let mut y = YField::new(&p, 9, 0);
    y.shift = [3, -2];
    let w2 = BlockRange::new([3, -2], [4, -1]);
    let b = EnvBuilder::new(&p, w2).yfield(y).build().unwrap();
    for z in w.iter() {
        let (ba, bb) = (a.block(z).unwrap(), b.block([z[0] + 3, z[1] - 2]).unwrap());
        for (x, y) in ba.mass.iter().zip(&bb.mass) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn cap_is_monotone() {
    let mut prev: Option<Environment> = None;
    for rho in [0.05, 0.1, 0.2, 0.4] {
        let p = params(Variant::Capped, 1.0, 5, 1.0, rho);
        let env = build_environment(&p, BlockRange::new([0, 0], [1, 1]), 4).unwrap();
        if let Some(q) = &prev {
            for (a, b) in q.blocks().zip(env.blocks()) {
                assert!(a.mass.iter().zip(&b.mass).all(|(x, y)| x <= y));
            }
        }
        prev = Some(env);
    }
}

#[test]
fn inverse_position_walks_the_table() {
    let (_, env) = small(Variant::Capped);
    let s = (0..25)
        .map(|i| env.site(site_from_local([0, 0], i, 5)).unwrap())
        .find(|s| s.segments.len() >= 2)
        .unwrap();
    let o = s.block_origin;
    let first = inverse_position(&s, 0.0).unwrap();
    assert_eq!(
        first,
        Point2::new(o.x + s.segments[0].a.x, o.y + s.segments[0].a.y)
    );
    let last = inverse_position(&s, 1.0).unwrap();
    let ls = s.segments.last().unwrap();
    assert_eq!(last, Point2::new(o.x + ls.b.x, o.y + ls.b.y));
    for v in [0.1, 0.5, 0.93] {
        let q = inverse_position(&s, v).unwrap();
        assert!(s.global_cube().expand(1e-12).contains_closed(q));
    }
    let empty = params(Variant::Del, 1.0, 5, 1.0, 1.0);
    let e = EnvBuilder::new(&empty, BlockRange::new([0, 0], [0, 0]))
        .seed(1)
        .build()
        .unwrap();
    let zero = e
        .blocks()
        .next()
        .unwrap()
        .mass
        .iter()
        .position(|&m| m == 0.0)
        .unwrap();
    let s0 = e.site(site_from_local([0, 0], zero, 5)).unwrap();
    assert_eq!(inverse_position(&s0, 0.5), Err(Error::EmptySupport));
}

#[test]
fn width_variant_masses() {
    let (p, env) = small(Variant::Width);
    assert!((p.rho - 0.04).abs() < 1e-15);
    let s = env.site([0, 0]).unwrap();
    assert!(matches!(
        inverse_position(&s, 0.5),
        Err(Error::VariantMismatch(_))
    ));
    assert!(env.max_mass() <= p.rho + 1e-15);
    let occupied = env
        .blocks()
        .flat_map(|b| b.mass.iter())
        .filter(|&&m| m > 0.0)
        .count();
    assert!(occupied > 0);
}

#[test]
fn resample_rebuilds_exactly_like_a_fresh_build() {
    let p = params(Variant::Capped, 1.0, 5, 1.0, 0.3);
    let window = BlockRange::new([-3, -3], [3, 3]);
    let env = build_environment(&p, window, 21).unwrap();
    let r = env.resample_env_block([0, 1], 4).unwrap();
    let fresh = EnvBuilder::new(&p, window)
        .seed(21)
        .yfield(env.yfield().with_override([0, 1], YOverride::Resample(4)))
        .build()
        .unwrap();
    let dep = p.dependency_radius().unwrap();
    let mut changed = 0;
    for z in window.iter() {
        assert_eq!(r.block(z), fresh.block(z));
        if r.block(z) != env.block(z) {
            changed += 1;
            assert!(crate::lattice::sup_norm([z[0], z[1] - 1]) <= dep);
        }
    }
    assert!(changed > 0);
    assert!(matches!(
        env.resample_env_block([40, 0], 1),
        Err(Error::OutOfWindow(_))
    ));
}

#[test]
fn conditions_hold_for_capped_grid() {
    let p = params(Variant::Capped, 2.0, 9, 1.0, 0.3);
    let env = build_environment(&p, BlockRange::new([-2, -2], [2, 2]), 2).unwrap();
    let cfg = ConditionConfig {
        eta: 1e-6,
        q0: 0.9999,
        coverage_blocks: 20,
        one_dep_sites: 20,
        conn_blocks: 1,
    };
    let rep = check_conditions_with(&env, &cfg, 1).unwrap();
    assert!(rep.one_dependence, "{:?}", rep.one_dependence_mismatches);
    assert!(rep.cap_ok);
    assert_eq!(rep.coverage, 1.0);
    assert!(rep.circumradius_ok, "{}", rep.circumradius_max);
    assert_eq!(rep.essential.blocks_checked, 1);
    assert!(rep.essential.pass_at_eta);
}

#[test]
fn pure_delaunay_is_not_one_dependent() {
    let p = params(Variant::Del, 1.0, 5, 1.0, 1.0);
    let env = build_environment(&p, BlockRange::new([-2, -2], [2, 2]), 8).unwrap();
    let cfg = ConditionConfig {
        eta: 1e-6,
        q0: 0.9999,
        coverage_blocks: 5,
        one_dep_sites: 60,
        conn_blocks: 0,
    };
    let rep = check_conditions_with(&env, &cfg, 3).unwrap();
    assert!(!rep.one_dependence);
}

#[test]
fn dump_lists_built_sites() {
    let (_, env) = small(Variant::Capped);
    let text = env.to_dump();
    assert!(text.starts_with("# environment v1"));
    assert_eq!(
        text.lines().filter(|l| l.starts_with("site ")).count(),
        25 * 25
    );
}
