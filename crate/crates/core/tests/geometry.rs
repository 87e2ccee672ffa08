mod support;

use coxperc_core::geometry::predicates::orient;
use coxperc_core::geometry::{
    circumcircle, clip_segments_to_cube, delaunay_triangulate, min_distance_to_segments,
    sample_poisson_block, superimpose_grid, Point2, Rect, Segment,
};
use coxperc_core::lattice::{derive_stream, Purpose, StreamKey};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::exact_delaunay::{count_violations, random_instance, SCALE};

fn collinear(p: &[Point2]) -> bool {
    let mut u = p.to_vec();
    u.sort_by(coxperc_core::geometry::lex_cmp);
    u.dedup();
    u.len() < 3 || (2..u.len()).all(|k| orient(u[0], u[1], u[k]) == 0.0)
}

#[test]
fn random_instances_pass_brute_force_oracle() {
    for seed in 0..300 {
        let pts = random_instance(seed);
        if collinear(&pts) {
            assert!(delaunay_triangulate(&pts).is_err());
            continue;
        }
        let t = delaunay_triangulate(&pts).unwrap();
        assert_eq!(count_violations(&pts, &t.triangles), 0, "seed {seed}");
    }
}

#[test]
fn pure_grid_blocks_pass_oracle() {
    for (w, h) in [(2, 2), (3, 5), (6, 4)] {
        let pts: Vec<Point2> = (0..=w)
            .flat_map(|i| (0..=h).map(move |j| Point2::new(i as f64, j as f64)))
            .collect();
        let t = delaunay_triangulate(&pts).unwrap();
        assert_eq!(count_violations(&pts, &t.triangles), 0);
    }
}

#[test]
fn output_is_independent_of_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..40 {
        let pts = random_instance(1000 + seed);
        if collinear(&pts) {
            continue;
        }
        let a = delaunay_triangulate(&pts).unwrap();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled: Vec<Point2> = perm.iter().map(|&i| pts[i]).collect();
        let b = delaunay_triangulate(&shuffled).unwrap();
        let mut ea: Vec<(u64, u64, u64, u64)> = a.edge_segments().map(key).collect();
        let mut eb: Vec<(u64, u64, u64, u64)> = b.edge_segments().map(key).collect();
        ea.sort_unstable();
        eb.sort_unstable();
        assert_eq!(ea, eb);
    }
}

fn key(s: Segment) -> (u64, u64, u64, u64) {
    (
        s.a.x.to_bits(),
        s.a.y.to_bits(),
        s.b.x.to_bits(),
        s.b.y.to_bits(),
    )
}

#[test]
fn larger_poisson_plus_grid_passes_oracle() {
    for seed in 0..5u64 {
        let mut r = derive_stream(&StreamKey::new(seed, [0, 0], Purpose::Env, 0));
        let w = Rect::new(0.0, 0.0, 8.0, 8.0);
        let pts: Vec<Point2> = sample_poisson_block(&mut r, 1.5, &w)
            .into_iter()
            .map(|p| Point2::new((p.x * SCALE).floor() / SCALE, (p.y * SCALE).floor() / SCALE))
            .collect();
        let all = superimpose_grid(&pts, 2.0, &w);
        let t = delaunay_triangulate(&all).unwrap();
        assert_eq!(count_violations(&all, &t.triangles), 0);
    }
}

#[test]
fn circumradius_bound_with_grid() {
    let l = 2.0;
    for seed in 0..10u64 {
        let mut r = derive_stream(&StreamKey::new(seed, [1, 1], Purpose::Env, 0));
        let window = Rect::new(0.0, 0.0, 20.0, 20.0);
        let pts = sample_poisson_block(&mut r, 1.0, &window.expand(l));
        let all = superimpose_grid(&pts, l, &window.expand(l));
        let t = delaunay_triangulate(&all).unwrap();
        for tri in &t.triangles {
            let [a, b, c] = tri.map(|i| t.vertices[i as usize]);
            let (cc, rad) = circumcircle(a, b, c);
            if window.contains_closed(cc) {
                assert!(
                    rad < l * std::f64::consts::SQRT_2 / 2.0 + 1e-12,
                    "radius {rad}"
                );
            }
        }
    }
}

#[test]
fn locality_of_clipped_segments() {
    let l = 1.0;
    let window = Rect::new(-10.0, -10.0, 10.0, 10.0);
    let cube = Rect::new(0.0, 0.0, 1.0, 1.0);
    for seed in 0..20u64 {
        let mut r = derive_stream(&StreamKey::new(seed, [0, 0], Purpose::Env, 0));
        let mut pts = sample_poisson_block(&mut r, 1.0, &window);
        let base = superimpose_grid(&pts, l, &window);
        let edges: Vec<Segment> = delaunay_triangulate(&base)
            .unwrap()
            .edge_segments()
            .collect();
        let before = clip_segments_to_cube(&edges, &cube);
        let far = pts
            .iter()
            .position(|p| cube.distance(*p) > 4.0 * l)
            .unwrap();
        pts[far] = Point2::new(pts[far].x * 0.97 + 0.1, pts[far].y * 0.93 - 0.05);
        if cube.distance(pts[far]) <= 4.0 * l {
            continue;
        }
        let moved = superimpose_grid(&pts, l, &window);
        let edges2: Vec<Segment> = delaunay_triangulate(&moved)
            .unwrap()
            .edge_segments()
            .collect();
        assert_eq!(before, clip_segments_to_cube(&edges2, &cube));
    }
}

#[test]
fn clipped_length_matches_line_integral_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cube = Rect::new(0.2, -0.3, 1.7, 1.1);
    let edges: Vec<Segment> = (0..40)
        .map(|_| {
            let p = Point2::new(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.5));
            let q = Point2::new(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.5));
            Segment::new(p, q)
        })
        .collect();
    let (_, total) = clip_segments_to_cube(&edges, &cube);
    // Dense sampling along each segment counts the fraction inside the cube.
    let mut oracle = 0.0;
    let k = 20_000;
    for e in &edges {
        let inside = (0..k)
            .filter(|&i| cube.contains(e.at((i as f64 + 0.5) / k as f64)))
            .count();
        oracle += e.length() * inside as f64 / k as f64;
    }
    assert!(
        (total - oracle).abs() <= 0.01 * oracle,
        "{total} vs {oracle}"
    );
}

#[test]
fn distance_matches_discretization_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let segs: Vec<Segment> = (0..5)
            .map(|_| {
                Segment::new(
                    Point2::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)),
                    Point2::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)),
                )
            })
            .collect();
        let p = Point2::new(rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0));
        let exact = min_distance_to_segments(p, &segs).unwrap();
        let mut best = f64::INFINITY;
        for s in &segs {
            // Coarse scan, then refine around the best sample.
            let mut bi = 0;
            for i in 0..=1000 {
                let d = p.dist(s.at(i as f64 / 1000.0));
                if d < best {
                    best = d;
                    bi = i;
                }
            }
            let lo = (bi as i64 - 1).max(0) as f64 / 1000.0;
            for i in 0..=2000 {
                let t = lo + 2.0 / 1000.0 * i as f64 / 2000.0;
                best = best.min(p.dist(s.at(t.min(1.0))));
            }
        }
        assert!((exact - best).abs() < 1e-6, "{exact} vs {best}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipping_is_additive_over_partitions(
        ax in -2.0f64..4.0, ay in -2.0f64..4.0, bx in -2.0f64..4.0, by in -2.0f64..4.0, k in 1usize..6,
    ) {
        let s = Segment::new(Point2::new(ax, ay), Point2::new(bx, by));
        let whole = clip_segments_to_cube(&[s], &Rect::new(0.0, 0.0, 2.0, 2.0)).1;
        let h = 2.0 / k as f64;
        let mut parts = 0.0;
        for i in 0..k {
            for j in 0..k {
                let x0 = if i == 0 { 0.0 } else { i as f64 * h };
                let x1 = if i + 1 == k { 2.0 } else { (i + 1) as f64 * h };
                let y0 = if j == 0 { 0.0 } else { j as f64 * h };
                let y1 = if j + 1 == k { 2.0 } else { (j + 1) as f64 * h };
                parts += clip_segments_to_cube(&[s], &Rect::new(x0, y0, x1, y1)).1;
            }
        }
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.max(1e-300));
    }

    #[test]
    fn triangulation_is_delaunay_for_random_dyadic_sets(
        raw in proptest::collection::vec((0u32..64, 0u32..64), 3..25)
    ) {
        let pts: Vec<Point2> = raw.iter().map(|&(x, y)| Point2::new(x as f64 / 8.0, y as f64 / 8.0)).collect();
        if !collinear(&pts) {
            let t = delaunay_triangulate(&pts).unwrap();
            prop_assert_eq!(count_violations(&pts, &t.triangles), 0);
        }
    }
}
