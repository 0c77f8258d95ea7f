//! Scoring functions and analytic gradients for the eleven models.
//!
//! All scores are higher-is-better: distance-based models return the negated
//! distance, so one ranking code path serves every model. Group indices
//! below follow the layout of [`group_specs`](super::group_specs).
//!
//! Score functions per model, with E/R the entity/relation tables:
//!
//! - TransE:   -||h + r - t||
//! - TransH:   -||h' + d_r - t'||^2,  x' = x - (w.x)w, w the unit normal
//! - TransR:   -||M_r h + r - M_r t||^2
//! - TransD:   -||h' + r - t'||^2,  x' = x + (x_p.x) r_p
//! - RotatE:   -||h o r - t|| over complex coordinates, |r_i| = 1 by phase
//! - DistMult: sum_i h_i r_i t_i
//! - ComplEx:  Re(sum_i h_i r_i conj(t_i))
//! - SimplE:   ((h_head, r, t_tail) + (t_head, r_inv, h_tail)) / 2
//! - RESCAL:   h^T W_r t
//! - TuckER:   W x1 h x2 w_r x3 t, W shared across relations
//! - MurE:     -||rho_r o h - (t + r)||^2 + b_h + b_t

use super::{EmbedError, ModelKind, ModelState, SparseGrad};

/// Which slot of a triple is being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictTask {
    Head,
    Relation,
    Tail,
}

/// Norms below this are treated as zero when normalizing gradients.
const NORM_EPS: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plausibility score of (h, r, t); higher means more plausible.
pub fn score_triple(state: &ModelState, h: usize, r: usize, t: usize) -> Result<f64, EmbedError> {
    state.check_entity(h)?;
    state.check_relation(r)?;
    state.check_entity(t)?;
    Ok(score_unchecked(state, h, r, t))
}

fn score_unchecked(state: &ModelState, h: usize, r: usize, t: usize) -> f64 {
    let d = state.dim;
    let g = &state.groups;
    match state.kind {
        ModelKind::TransE => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let sq: f64 = (0..d)
                .map(|k| {
                    let v = eh[k] + er[k] - et[k];
                    v * v
                })
                .sum();
            -sq.sqrt()
        }
        ModelKind::TransH => {
            let (eh, er, w, et) = (g[0].row(h), g[1].row(r), g[2].row(r), g[0].row(t));
            let wh = dot(w, eh);
            let wt = dot(w, et);
            let sq: f64 = (0..d)
                .map(|k| {
                    let v = (eh[k] - wh * w[k]) + er[k] - (et[k] - wt * w[k]);
                    v * v
                })
                .sum();
            -sq
        }
        ModelKind::TransR => {
            let (eh, er, m, et) = (g[0].row(h), g[1].row(r), g[2].row(r), g[0].row(t));
            let mut sq = 0.0;
            for i in 0..d {
                let mut v = er[i];
                for j in 0..d {
                    v += m[i * d + j] * (eh[j] - et[j]);
                }
                sq += v * v;
            }
            -sq
        }
        ModelKind::TransD => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let (hp, tp, rp) = (g[2].row(h), g[2].row(t), g[3].row(r));
            let alpha = dot(hp, eh);
            let beta = dot(tp, et);
            let sq: f64 = (0..d)
                .map(|k| {
                    let v = eh[k] - et[k] + er[k] + (alpha - beta) * rp[k];
                    v * v
                })
                .sum();
            -sq
        }
        ModelKind::RotatE => {
            let (he, te, theta) = (g[0].row(h), g[0].row(t), g[1].row(r));
            let (ha, hb) = he.split_at(d);
            let (ta, tb) = te.split_at(d);
            let sq: f64 = (0..d)
                .map(|k| {
                    let (sin, cos) = theta[k].sin_cos();
                    let re = ha[k] * cos - hb[k] * sin - ta[k];
                    let im = ha[k] * sin + hb[k] * cos - tb[k];
                    re * re + im * im
                })
                .sum();
            -sq.sqrt()
        }
        ModelKind::DistMult => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            // (h*t)*r keeps the h <-> t swap bitwise symmetric.
            (0..d).map(|k| eh[k] * et[k] * er[k]).sum()
        }
        ModelKind::ComplEx => {
            let (he, re, te) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let (hr, hi) = he.split_at(d);
            let (rr, ri) = re.split_at(d);
            let (tr, ti) = te.split_at(d);
            (0..d)
                .map(|k| {
                    (hr[k] * rr[k] - hi[k] * ri[k]) * tr[k]
                        + (hr[k] * ri[k] + hi[k] * rr[k]) * ti[k]
                })
                .sum()
        }
        ModelKind::SimplE => {
            let (hh, th) = (g[0].row(h), g[1].row(h));
            let (ht, tt) = (g[0].row(t), g[1].row(t));
            let (er, ei) = (g[2].row(r), g[3].row(r));
            let forward: f64 = (0..d).map(|k| hh[k] * er[k] * tt[k]).sum();
            let inverse: f64 = (0..d).map(|k| ht[k] * ei[k] * th[k]).sum();
            0.5 * (forward + inverse)
        }
        ModelKind::Rescal => {
            let (eh, w, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += eh[i] * w[i * d + j] * et[j];
                }
            }
            s
        }
        ModelKind::Tucker => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let w = g[2].row(0);
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let hr = eh[i] * er[j];
                    for k in 0..d {
                        s += w[(i * d + j) * d + k] * hr * et[k];
                    }
                }
            }
            s
        }
        ModelKind::MurE => {
            let (eh, et) = (g[0].row(h), g[0].row(t));
            let (rho, rt) = (g[1].row(r), g[2].row(r));
            let sq: f64 = (0..d)
                .map(|k| {
                    let v = rho[k] * eh[k] - et[k] - rt[k];
                    v * v
                })
                .sum();
            -sq + g[3].row(h)[0] + g[3].row(t)[0]
        }
    }
}

/// Analytic gradient of `upstream * score(h, r, t)` with respect to every
/// touched parameter row. Untouched rows are absent; rows touched through
/// both endpoints (h == t) appear once with summed contributions. A zero
/// upstream yields an empty gradient.
pub fn grad_triple(
    state: &ModelState,
    h: usize,
    r: usize,
    t: usize,
    upstream: f64,
) -> Result<SparseGrad, EmbedError> {
    state.check_entity(h)?;
    state.check_relation(r)?;
    state.check_entity(t)?;
    let mut grad = SparseGrad::new();
    if upstream == 0.0 {
        return Ok(grad);
    }
    let d = state.dim;
    let g = &state.groups;
    match state.kind {
        ModelKind::TransE => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let v: Vec<f64> = (0..d).map(|k| eh[k] + er[k] - et[k]).collect();
            let n = dot(&v, &v).sqrt();
            if n > NORM_EPS {
                let down: Vec<f64> = v.iter().map(|x| -x / n).collect();
                let up: Vec<f64> = v.iter().map(|x| x / n).collect();
                grad.accumulate(0, h, &down);
                grad.accumulate(1, r, &down);
                grad.accumulate(0, t, &up);
            }
        }
        ModelKind::TransH => {
            let (eh, er, w, et) = (g[0].row(h), g[1].row(r), g[2].row(r), g[0].row(t));
            let a: Vec<f64> = (0..d).map(|k| et[k] - eh[k]).collect();
            let c = dot(w, &a);
            let v: Vec<f64> = (0..d).map(|k| -a[k] + er[k] + c * w[k]).collect();
            let vw = dot(&v, w);
            grad.accumulate(
                0,
                h,
                &(0..d).map(|k| -2.0 * (v[k] - vw * w[k])).collect::<Vec<_>>(),
            );
            grad.accumulate(
                0,
                t,
                &(0..d).map(|k| 2.0 * (v[k] - vw * w[k])).collect::<Vec<_>>(),
            );
            grad.accumulate(1, r, &v.iter().map(|x| -2.0 * x).collect::<Vec<_>>());
            grad.accumulate(
                2,
                r,
                &(0..d)
                    .map(|k| -2.0 * (vw * a[k] + c * v[k]))
                    .collect::<Vec<_>>(),
            );
        }
        ModelKind::TransR => {
            let (eh, er, m, et) = (g[0].row(h), g[1].row(r), g[2].row(r), g[0].row(t));
            let diff: Vec<f64> = (0..d).map(|k| eh[k] - et[k]).collect();
            let v: Vec<f64> = (0..d)
                .map(|i| er[i] + (0..d).map(|j| m[i * d + j] * diff[j]).sum::<f64>())
                .collect();
            let mtv: Vec<f64> = (0..d)
                .map(|j| (0..d).map(|i| v[i] * m[i * d + j]).sum::<f64>())
                .collect();
            grad.accumulate(0, h, &mtv.iter().map(|x| -2.0 * x).collect::<Vec<_>>());
            grad.accumulate(0, t, &mtv.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
            grad.accumulate(1, r, &v.iter().map(|x| -2.0 * x).collect::<Vec<_>>());
            let mut gm = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    gm[i * d + j] = -2.0 * v[i] * diff[j];
                }
            }
            grad.accumulate(2, r, &gm);
        }
        ModelKind::TransD => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let (hp, tp, rp) = (g[2].row(h), g[2].row(t), g[3].row(r));
            let alpha = dot(hp, eh);
            let beta = dot(tp, et);
            let v: Vec<f64> = (0..d)
                .map(|k| eh[k] - et[k] + er[k] + (alpha - beta) * rp[k])
                .collect();
            let vrp = dot(&v, rp);
            grad.accumulate(
                0,
                h,
                &(0..d).map(|k| -2.0 * (v[k] + vrp * hp[k])).collect::<Vec<_>>(),
            );
            grad.accumulate(
                0,
                t,
                &(0..d).map(|k| 2.0 * (v[k] + vrp * tp[k])).collect::<Vec<_>>(),
            );
            grad.accumulate(1, r, &v.iter().map(|x| -2.0 * x).collect::<Vec<_>>());
            grad.accumulate(
                2,
                h,
                &eh.iter().map(|x| -2.0 * vrp * x).collect::<Vec<_>>(),
            );
            grad.accumulate(2, t, &et.iter().map(|x| 2.0 * vrp * x).collect::<Vec<_>>());
            grad.accumulate(
                3,
                r,
                &v.iter().map(|x| -2.0 * (alpha - beta) * x).collect::<Vec<_>>(),
            );
        }
        ModelKind::RotatE => {
            let (he, te, theta) = (g[0].row(h), g[0].row(t), g[1].row(r));
            let (ha, hb) = he.split_at(d);
            let (ta, tb) = te.split_at(d);
            let mut re = vec![0.0; d];
            let mut im = vec![0.0; d];
            let mut p = vec![0.0; d];
            let mut q = vec![0.0; d];
            for k in 0..d {
                let (sin, cos) = theta[k].sin_cos();
                p[k] = ha[k] * cos - hb[k] * sin;
                q[k] = ha[k] * sin + hb[k] * cos;
                re[k] = p[k] - ta[k];
                im[k] = q[k] - tb[k];
            }
            let n = (dot(&re, &re) + dot(&im, &im)).sqrt();
            if n > NORM_EPS {
                let mut gh = vec![0.0; 2 * d];
                let mut gt = vec![0.0; 2 * d];
                let mut gtheta = vec![0.0; d];
                for k in 0..d {
                    let (sin, cos) = theta[k].sin_cos();
                    gh[k] = -(re[k] * cos + im[k] * sin) / n;
                    gh[d + k] = -(im[k] * cos - re[k] * sin) / n;
                    gt[k] = re[k] / n;
                    gt[d + k] = im[k] / n;
                    gtheta[k] = (re[k] * q[k] - im[k] * p[k]) / n;
                }
                grad.accumulate(0, h, &gh);
                grad.accumulate(0, t, &gt);
                grad.accumulate(1, r, &gtheta);
            }
        }
        ModelKind::DistMult => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            grad.accumulate(0, h, &(0..d).map(|k| er[k] * et[k]).collect::<Vec<_>>());
            grad.accumulate(1, r, &(0..d).map(|k| eh[k] * et[k]).collect::<Vec<_>>());
            grad.accumulate(0, t, &(0..d).map(|k| eh[k] * er[k]).collect::<Vec<_>>());
        }
        ModelKind::ComplEx => {
            let (he, re, te) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let (hr, hi) = he.split_at(d);
            let (rr, ri) = re.split_at(d);
            let (tr, ti) = te.split_at(d);
            let mut gh = vec![0.0; 2 * d];
            let mut gr = vec![0.0; 2 * d];
            let mut gt = vec![0.0; 2 * d];
            for k in 0..d {
                gh[k] = rr[k] * tr[k] + ri[k] * ti[k];
                gh[d + k] = -ri[k] * tr[k] + rr[k] * ti[k];
                gr[k] = hr[k] * tr[k] + hi[k] * ti[k];
                gr[d + k] = -hi[k] * tr[k] + hr[k] * ti[k];
                gt[k] = hr[k] * rr[k] - hi[k] * ri[k];
                gt[d + k] = hr[k] * ri[k] + hi[k] * rr[k];
            }
            grad.accumulate(0, h, &gh);
            grad.accumulate(1, r, &gr);
            grad.accumulate(0, t, &gt);
        }
        ModelKind::SimplE => {
            let (hh, th) = (g[0].row(h), g[1].row(h));
            let (ht, tt) = (g[0].row(t), g[1].row(t));
            let (er, ei) = (g[2].row(r), g[3].row(r));
            grad.accumulate(0, h, &(0..d).map(|k| 0.5 * er[k] * tt[k]).collect::<Vec<_>>());
            grad.accumulate(1, t, &(0..d).map(|k| 0.5 * er[k] * hh[k]).collect::<Vec<_>>());
            grad.accumulate(2, r, &(0..d).map(|k| 0.5 * hh[k] * tt[k]).collect::<Vec<_>>());
            grad.accumulate(0, t, &(0..d).map(|k| 0.5 * ei[k] * th[k]).collect::<Vec<_>>());
            grad.accumulate(1, h, &(0..d).map(|k| 0.5 * ei[k] * ht[k]).collect::<Vec<_>>());
            grad.accumulate(3, r, &(0..d).map(|k| 0.5 * ht[k] * th[k]).collect::<Vec<_>>());
        }
        ModelKind::Rescal => {
            let (eh, w, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let gh: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| w[i * d + j] * et[j]).sum())
                .collect();
            let gt: Vec<f64> = (0..d)
                .map(|j| (0..d).map(|i| eh[i] * w[i * d + j]).sum())
                .collect();
            let mut gw = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    gw[i * d + j] = eh[i] * et[j];
                }
            }
            grad.accumulate(0, h, &gh);
            grad.accumulate(0, t, &gt);
            grad.accumulate(1, r, &gw);
        }
        ModelKind::Tucker => {
            let (eh, er, et) = (g[0].row(h), g[1].row(r), g[0].row(t));
            let w = g[2].row(0);
            let mut gh = vec![0.0; d];
            let mut gr = vec![0.0; d];
            let mut gt = vec![0.0; d];
            let mut gw = vec![0.0; d * d * d];
            for i in 0..d {
                for j in 0..d {
                    let hirj = eh[i] * er[j];
                    for k in 0..d {
                        let wv = w[(i * d + j) * d + k];
                        gh[i] += wv * er[j] * et[k];
                        gr[j] += wv * eh[i] * et[k];
                        gt[k] += wv * hirj;
                        gw[(i * d + j) * d + k] = hirj * et[k];
                    }
                }
            }
            grad.accumulate(0, h, &gh);
            grad.accumulate(1, r, &gr);
            grad.accumulate(0, t, &gt);
            grad.accumulate(2, 0, &gw);
        }
        ModelKind::MurE => {
            let (eh, et) = (g[0].row(h), g[0].row(t));
            let (rho, rt) = (g[1].row(r), g[2].row(r));
            let v: Vec<f64> = (0..d).map(|k| rho[k] * eh[k] - et[k] - rt[k]).collect();
            grad.accumulate(
                0,
                h,
                &(0..d).map(|k| -2.0 * v[k] * rho[k]).collect::<Vec<_>>(),
            );
            grad.accumulate(0, t, &v.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
            grad.accumulate(
                1,
                r,
                &(0..d).map(|k| -2.0 * v[k] * eh[k]).collect::<Vec<_>>(),
            );
            grad.accumulate(2, r, &v.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
            grad.accumulate(3, h, &[1.0]);
            grad.accumulate(3, t, &[1.0]);
        }
    }
    grad.scale(upstream);
    Ok(grad)
}

/// Score the full candidate vocabulary for the unfixed slot of a triple.
///
/// - `Head`: `fixed = (r, t)`, one score per entity as head.
/// - `Relation`: `fixed = (h, t)`, one score per relation.
/// - `Tail`: `fixed = (h, r)`, one score per entity as tail.
///
/// Equal elementwise to repeated [`score_triple`] calls; models whose score
/// factorizes (RESCAL, TuckER) precompute the fixed part once.
pub fn score_candidates(
    state: &ModelState,
    task: PredictTask,
    fixed_a: usize,
    fixed_b: usize,
) -> Result<Vec<f64>, EmbedError> {
    let d = state.dim;
    match task {
        PredictTask::Head => {
            state.check_relation(fixed_a)?;
            state.check_entity(fixed_b)?;
            let (r, t) = (fixed_a, fixed_b);
            match state.kind {
                ModelKind::Rescal => {
                    let (w, et) = (state.groups[1].row(r), state.groups[0].row(t));
                    let u: Vec<f64> = (0..d)
                        .map(|i| (0..d).map(|j| w[i * d + j] * et[j]).sum())
                        .collect();
                    Ok((0..state.num_entities)
                        .map(|h| dot(state.groups[0].row(h), &u))
                        .collect())
                }
                ModelKind::Tucker => {
                    let (er, et) = (state.groups[1].row(r), state.groups[0].row(t));
                    let w = state.groups[2].row(0);
                    let u: Vec<f64> = (0..d)
                        .map(|i| {
                            let mut acc = 0.0;
                            for j in 0..d {
                                for k in 0..d {
                                    acc += w[(i * d + j) * d + k] * er[j] * et[k];
                                }
                            }
                            acc
                        })
                        .collect();
                    Ok((0..state.num_entities)
                        .map(|h| dot(state.groups[0].row(h), &u))
                        .collect())
                }
                _ => Ok((0..state.num_entities)
                    .map(|h| score_unchecked(state, h, r, t))
                    .collect()),
            }
        }
        PredictTask::Relation => {
            state.check_entity(fixed_a)?;
            state.check_entity(fixed_b)?;
            let (h, t) = (fixed_a, fixed_b);
            match state.kind {
                ModelKind::Tucker => {
                    let (eh, et) = (state.groups[0].row(h), state.groups[0].row(t));
                    let w = state.groups[2].row(0);
                    let u: Vec<f64> = (0..d)
                        .map(|j| {
                            let mut acc = 0.0;
                            for i in 0..d {
                                for k in 0..d {
                                    acc += w[(i * d + j) * d + k] * eh[i] * et[k];
                                }
                            }
                            acc
                        })
                        .collect();
                    Ok((0..state.num_relations)
                        .map(|r| dot(state.groups[1].row(r), &u))
                        .collect())
                }
                _ => Ok((0..state.num_relations)
                    .map(|r| score_unchecked(state, h, r, t))
                    .collect()),
            }
        }
        PredictTask::Tail => {
            state.check_entity(fixed_a)?;
            state.check_relation(fixed_b)?;
            let (h, r) = (fixed_a, fixed_b);
            match state.kind {
                ModelKind::Rescal => {
                    let (eh, w) = (state.groups[0].row(h), state.groups[1].row(r));
                    let u: Vec<f64> = (0..d)
                        .map(|j| (0..d).map(|i| eh[i] * w[i * d + j]).sum())
                        .collect();
                    Ok((0..state.num_entities)
                        .map(|t| dot(&u, state.groups[0].row(t)))
                        .collect())
                }
                ModelKind::Tucker => {
                    let (eh, er) = (state.groups[0].row(h), state.groups[1].row(r));
                    let w = state.groups[2].row(0);
                    let u: Vec<f64> = (0..d)
                        .map(|k| {
                            let mut acc = 0.0;
                            for i in 0..d {
                                for j in 0..d {
                                    acc += w[(i * d + j) * d + k] * eh[i] * er[j];
                                }
                            }
                            acc
                        })
                        .collect();
                    Ok((0..state.num_entities)
                        .map(|t| dot(&u, state.groups[0].row(t)))
                        .collect())
                }
                _ => Ok((0..state.num_entities)
                    .map(|t| score_unchecked(state, h, r, t))
                    .collect()),
            }
        }
    }
}
