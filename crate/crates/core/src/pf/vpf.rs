//! Vectorized particle filter. Each step gathers the resampled ancestors
//! into columns, builds one row mask per transition from batched guard
//! evaluation, applies every transition's statements to its masked rows,
//! then scores per checkpoint. Particles are processed in fixed-size chunks
//! so the work can be spread over threads without changing any result.

use super::{check_collapse, resample_step, sorted_snapshots, Execution, ParticleEnsemble, PfConfig, PfError};
use crate::dist::{check_params, draw_from_uniform, DistError, Statement};
use crate::exec::map_ranges;
use crate::ppg::{Ppg, PpgError};
use crate::rng::uniform_at;

const CHUNK: usize = 8192;

pub fn run_vpf(g: &Ppg, cfg: &PfConfig, exec: Execution) -> Result<ParticleEnsemble, PfError> {
    Ok(run_vpf_snapshots(g, cfg, exec, &[cfg.t])?.pop().expect("one snapshot"))
}

/// Runs to `cfg.t` and returns the ensemble after each step listed in `at`,
/// in increasing step order.
pub fn run_vpf_snapshots(
    g: &Ppg,
    cfg: &PfConfig,
    exec: Execution,
    at: &[usize],
) -> Result<Vec<ParticleEnsemble>, PfError> {
    cfg.check()?;
    let steps = sorted_snapshots(at, cfg.t)?;
    let init = g.initial_state();
    let w0 = g
        .combined_score(&init)
        .map_err(|source| PfError::Program { step: 1, particle: 0, source })?;
    let mut ens = ParticleEnsemble {
        n: cfg.n,
        m: g.m(),
        values: init.store.iter().map(|&x| vec![x; cfg.n]).collect(),
        checkpoints: vec![init.checkpoint; cfg.n],
        weights: vec![w0; cfg.n],
        step: 1,
    };
    check_collapse(&ens.weights, 1)?;

    let mut out = Vec::with_capacity(steps.len());
    if steps.first() == Some(&1) {
        out.push(ens.clone());
    }
    for k in 2..=cfg.t {
        let ancestors = resample_step(cfg, &ens.weights, k, exec)?;
        ens = advance(g, cfg.seed, &ens, &ancestors, k, exec)?;
        check_collapse(&ens.weights, k)?;
        if steps.binary_search(&k).is_ok() {
            out.push(ens.clone());
        }
    }
    Ok(out)
}

/// The mask of every transition over the ensemble's current states:
/// `masks[e][j]` is set iff particle `j` sits at the source of `e` and its
/// guard holds. Fails on a guard error or a particle enabling other than
/// exactly one transition.
pub fn transition_masks(g: &Ppg, ens: &ParticleEnsemble) -> Result<Vec<Vec<bool>>, PfError> {
    let rows = select_rows(g, &ens.values, &ens.checkpoints).map_err(|(r, source)| PfError::Program {
        step: ens.step,
        particle: r,
        source,
    })?;
    Ok(rows
        .into_iter()
        .map(|rows| {
            let mut mask = vec![false; ens.n];
            for r in rows {
                mask[r as usize] = true;
            }
            mask
        })
        .collect())
}

struct Chunk {
    cols: Vec<Vec<f64>>,
    z: Vec<u32>,
    w: Vec<f64>,
}

fn advance(
    g: &Ppg,
    seed: u64,
    prev: &ParticleEnsemble,
    ancestors: &[u32],
    k: usize,
    exec: Execution,
) -> Result<ParticleEnsemble, PfError> {
    let n = ancestors.len();
    let parts = map_ranges(n, CHUNK, exec, |range| {
        let base = range.start;
        step_chunk(g, seed, k, prev, &ancestors[range], base).map_err(|(r, source)| PfError::Program {
            step: k,
            particle: base + r,
            source,
        })
    });
    let mut values: Vec<Vec<f64>> = (0..prev.m).map(|_| Vec::with_capacity(n)).collect();
    let mut checkpoints = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for part in parts {
        let chunk = part?;
        for (dst, src) in values.iter_mut().zip(chunk.cols) {
            dst.extend(src);
        }
        checkpoints.extend(chunk.z);
        weights.extend(chunk.w);
    }
    Ok(ParticleEnsemble { n, m: prev.m, values, checkpoints, weights, step: k })
}

fn row_store(cols: &[Vec<f64>], r: u32) -> Vec<f64> {
    cols.iter().map(|c| c[r as usize]).collect()
}

fn rows_by_checkpoint(g: &Ppg, z: &[u32]) -> Vec<Vec<u32>> {
    let mut by_cp = vec![Vec::new(); g.checkpoint_count()];
    for (r, &c) in z.iter().enumerate() {
        by_cp[c as usize].push(r as u32);
    }
    by_cp
}

/// Rows selected by each transition. Errors carry the chunk-local row.
fn select_rows(g: &Ppg, cols: &[Vec<f64>], z: &[u32]) -> Result<Vec<Vec<u32>>, (usize, PpgError)> {
    let by_cp = rows_by_checkpoint(g, z);
    let mut enabled = vec![0usize; z.len()];
    let mut selected = vec![Vec::new(); g.transitions().len()];
    for (ti, tr) in g.transitions().iter().enumerate() {
        let rows = &by_cp[tr.source as usize];
        if rows.is_empty() {
            continue;
        }
        let vals = tr.guard.eval_batch(cols, rows).map_err(|(pos, e)| {
            let r = rows[pos];
            (r as usize, g.guard_error(tr.source, ti, e, &row_store(cols, r)))
        })?;
        for (&r, v) in rows.iter().zip(vals) {
            if v == 1.0 {
                selected[ti].push(r);
                enabled[r as usize] += 1;
            } else if v != 0.0 {
                let e = crate::expr::EvalError::PredicateNotBoolean(v);
                return Err((r as usize, g.guard_error(tr.source, ti, e, &row_store(cols, r))));
            }
        }
    }
    if let Some(r) = enabled.iter().position(|&c| c != 1) {
        let store = row_store(cols, r as u32);
        return Err((r, g.partition_violation(z[r], enabled[r], &store)));
    }
    Ok(selected)
}

fn step_chunk(
    g: &Ppg,
    seed: u64,
    k: usize,
    prev: &ParticleEnsemble,
    ancestors: &[u32],
    base: usize,
) -> Result<Chunk, (usize, PpgError)> {
    let mut cols: Vec<Vec<f64>> = prev
        .values
        .iter()
        .map(|col| ancestors.iter().map(|&a| col[a as usize]).collect())
        .collect();
    let mut z: Vec<u32> = ancestors.iter().map(|&a| prev.checkpoints[a as usize]).collect();

    let selected = select_rows(g, &cols, &z)?;
    for (ti, rows) in selected.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        execute_batch(g, ti, &mut cols, rows, seed, k as u32, base)
            .map_err(|(r, e)| (r as usize, g.dist_error(ti, e)))?;
        let target = g.transitions()[ti].target;
        for &r in rows {
            z[r as usize] = target;
        }
    }

    let mut w = vec![1.0; z.len()];
    for (cp, rows) in rows_by_checkpoint(g, &z).into_iter().enumerate() {
        let cp = cp as u32;
        let Some(score) = g.score(cp) else { continue };
        if rows.is_empty() {
            continue;
        }
        let vals = score
            .eval_batch(&cols, &rows)
            .map_err(|(pos, e)| (rows[pos] as usize, g.score_eval_error(cp, e)))?;
        for (&r, v) in rows.iter().zip(vals) {
            w[r as usize] = g
                .check_score(cp, v, &row_store(&cols, r))
                .map_err(|e| (r as usize, e))?;
        }
    }
    Ok(Chunk { cols, z, w })
}

fn execute_batch(
    g: &Ppg,
    ti: usize,
    cols: &mut [Vec<f64>],
    rows: &[u32],
    seed: u64,
    step: u32,
    base: usize,
) -> Result<(), (u32, DistError)> {
    let mut draw = 0u32;
    for (si, stmt) in g.transitions()[ti].measure.statements.iter().enumerate() {
        match stmt {
            Statement::Sample { var, dist } => {
                let params = dist
                    .params()
                    .into_iter()
                    .map(|e| e.eval_batch(cols, rows))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|(pos, source)| (rows[pos], DistError::Eval { statement: si, source }))?;
                let mut buf = vec![0.0; params.len()];
                for (pos, &r) in rows.iter().enumerate() {
                    for (b, p) in buf.iter_mut().zip(&params) {
                        *b = p[pos];
                    }
                    if let Some(reason) = check_params(dist, &buf) {
                        return Err((r, DistError::InvalidParameter { statement: si, dist: dist.name(), reason }));
                    }
                    let u = uniform_at(seed, step, (base + r as usize) as u32, draw);
                    cols[*var][r as usize] = draw_from_uniform(dist, &buf, u);
                }
                draw += 1;
            }
            Statement::Assign { var, expr } => {
                let vals = expr
                    .eval_batch(cols, rows)
                    .map_err(|(pos, source)| (rows[pos], DistError::Eval { statement: si, source }))?;
                for (&r, v) in rows.iter().zip(vals) {
                    cols[*var][r as usize] = v;
                }
            }
        }
    }
    Ok(())
}
