use std::fmt::Write;

use super::Environment;
use crate::lattice::site_from_local;

pub(super) fn to_dump(env: &Environment) -> String {
    let p = env.params();
    let y = env.yfield();
    let mut out = String::new();
    let _ = writeln!(out, "# environment v1");
    let _ = writeln!(
        out,
        "# variant={} M={} b_inv={} L={} rho={} w0={} lambda_del={} seed={} trial={}",
        p.variant, p.m, p.b_inv, p.l, p.rho, p.w0, p.lambda_del, y.seed, y.trial
    );
    for bs in env.blocks() {
        for idx in 0..bs.built.len() {
            if !bs.built[idx] {
                continue;
            }
            let k = site_from_local(bs.block, idx, p.b_inv);
            let s = env.view(bs, idx, k);
            let _ = writeln!(
                out,
                "site {} {} mass {} total {} segments {}",
                k[0],
                k[1],
                s.mass,
                s.total_length,
                s.segments.len()
            );
            let o = s.block_origin;
            for (seg, c) in s.segments.iter().zip(s.cum) {
                let _ = writeln!(
                    out,
                    "seg {} {} {} {} {}",
                    o.x + seg.a.x,
                    o.y + seg.a.y,
                    o.x + seg.b.x,
                    o.y + seg.b.y,
                    c
                );
            }
        }
    }
    out
}
