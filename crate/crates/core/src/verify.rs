//! Self-contained numerical checks: advantage estimates, network
//! gradients, lookup argmax, height scans, track validation and batch
//! balance. None of them needs trained artifacts.

use rand::Rng as _;

use crate::nn::{gradient_check, Head, Mlp};
use crate::rl::ppo::{gae, value_loss_and_grad, Batch, GaussianPolicy};
use crate::rng;
use crate::switch::{argmax_bin, balanced_batches, LOOKUP_BINS};
use crate::terrain::{generate_track, validate_track, PolicyKind, TerrainConfig, TrackMode, SCAN_LEN};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Check {
        Check { name, passed, detail }
    }
}

/// Advantage by the direct double sum, cut at the first terminal.
fn discounted_oracle(r: &[f64], v: &[f64], done: &[bool], g: f64, l: f64) -> Vec<f64> {
    (0..r.len())
        .map(|t| {
            let mut acc = 0.0;
            let mut w = 1.0;
            for k in t..r.len() {
                let next = if done[k] { 0.0 } else { v[k + 1] };
                acc += w * (r[k] + g * next - v[k]);
                if done[k] {
                    break;
                }
                w *= g * l;
            }
            acc
        })
        .collect()
}

pub fn check_gae(seed: u64) -> Check {
    let mut r = rng::stream(seed, "verify/gae", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..=50);
        let rew: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let val: Vec<f64> = (0..=n).map(|_| r.random_range(-5.0..5.0)).collect();
        let done: Vec<bool> = (0..n).map(|_| r.random_bool(0.1)).collect();
        let g = r.random_range(0.5..1.0);
        let l = r.random_range(0.0..1.0);
        let (adv, _) = gae(&rew, &val, &done, g, l);
        let oracle = discounted_oracle(&rew, &val, &done, g, l);
        for (a, o) in adv.iter().zip(&oracle) {
            worst = worst.max((a - o).abs());
        }
    }
    Check::new("gae vs discounted-sum oracle", worst <= 1e-10, format!("max abs error {worst:.3e} (tol 1e-10)"))
}

fn central_difference(params: &mut [f64], k: usize, h: f64, mut loss: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let orig = params[k];
    params[k] = orig + h;
    let lp = loss(params)?;
    params[k] = orig - h;
    let lm = loss(params)?;
    params[k] = orig;
    Ok((lp - lm) / (2.0 * h))
}

fn rel_err(fd: f64, g: f64) -> f64 {
    (fd - g).abs() / fd.abs().max(g.abs()).max(1e-5)
}

fn policy_gradient_error(seed: u64, h: f64) -> Result<f64> {
    let mut r = rng::stream(seed, "verify/policy", 0);
    let (obs_dim, act_dim, n) = (6, 3, 12);
    let mut pol = GaussianPolicy::new(obs_dim, act_dim, &[10, 8], -0.5, &mut r)?;
    // move off the near-zero output initialisation
    for p in pol.net.params_mut() {
        *p += r.random_range(-0.3..0.3);
    }
    let obs: Vec<f64> = (0..n * obs_dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut actions = Vec::with_capacity(n * act_dim);
    let mut old = Vec::with_capacity(n);
    for i in 0..n {
        let (a, lp) = pol.sample(&obs[i * obs_dim..(i + 1) * obs_dim], &mut r)?;
        actions.extend(a);
        // ratios stay within the clip range, where the objective is smooth
        old.push(lp + r.random_range(-0.1..0.1));
    }
    let adv: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let batch = Batch {
        obs: &obs,
        actions: &actions,
        old_log_prob: &old,
        advantages: &adv,
    };
    let (_, grad) = pol.loss_and_grad(&batch, 0.2, 0.01)?;
    let n_net = pol.net.param_count();
    let mut flat: Vec<f64> = pol.net.params().to_vec();
    flat.extend_from_slice(&pol.log_std);
    let mut worst: f64 = 0.0;
    for k in 0..flat.len() {
        let fd = central_difference(&mut flat, k, h, |p| {
            let mut q = pol.clone();
            q.net.params_mut().copy_from_slice(&p[..n_net]);
            q.log_std.copy_from_slice(&p[n_net..]);
            Ok(q.loss_and_grad(&batch, 0.2, 0.01)?.0.loss)
        })?;
        worst = worst.max(rel_err(fd, grad[k]));
    }
    Ok(worst)
}

fn value_gradient_error(seed: u64, h: f64) -> Result<f64> {
    let mut r = rng::stream(seed, "verify/value", 0);
    let net = Mlp::new(&[5, 9, 1], Head::Linear, 1.0, &mut r)?;
    let obs: Vec<f64> = (0..8 * 5).map(|_| r.random_range(-1.0..1.0)).collect();
    let targets: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
    let (_, grad) = value_loss_and_grad(&net, &obs, &targets)?;
    let mut flat = net.params().to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..flat.len() {
        let fd = central_difference(&mut flat, k, h, |p| {
            let mut q = net.clone();
            q.params_mut().copy_from_slice(p);
            Ok(value_loss_and_grad(&q, &obs, &targets)?.0)
        })?;
        worst = worst.max(rel_err(fd, grad[k]));
    }
    Ok(worst)
}

pub fn check_gradients(seed: u64) -> Check {
    const H: f64 = 1e-5;
    let run = || -> Result<f64> {
        let mut r = rng::stream(seed, "verify/mlp", 0);
        let mut worst: f64 = 0.0;
        for (dims, head) in [
            (vec![4, 7, 3], Head::Linear),
            (vec![6, 8, 8, 2], Head::Linear),
            (vec![5, 6, 1], Head::Sigmoid),
            (vec![3, 16, 16, 1], Head::Sigmoid),
        ] {
            let net = Mlp::new(&dims, head, 1.0, &mut r)?;
            let x: Vec<f64> = (0..4 * dims[0]).map(|_| r.random_range(-1.5..1.5)).collect();
            worst = worst.max(gradient_check(&net, &x, H)?);
        }
        worst = worst.max(policy_gradient_error(seed, H)?);
        worst = worst.max(value_gradient_error(seed, H)?);
        Ok(worst)
    };
    match run() {
        Ok(w) => Check::new("network gradients vs central differences", w <= 1e-4, format!("max rel error {w:.3e} (tol 1e-4)")),
        Err(e) => Check::new("network gradients vs central differences", false, e.to_string()),
    }
}

pub fn check_lookup_argmax(seed: u64) -> Check {
    let mut r = rng::stream(seed, "verify/lookup", 0);
    let mut bad = 0;
    for _ in 0..1000 {
        let bins: Vec<(u32, u32)> = (0..LOOKUP_BINS)
            .map(|_| {
                let a = r.random_range(0..6u32);
                (r.random_range(0..=a), a)
            })
            .collect();
        // exhaustive: highest success rate, first (smallest distance) on ties
        let rates: Vec<f64> = bins
            .iter()
            .map(|&(s, a)| if a == 0 { 0.0 } else { s as f64 / a as f64 })
            .collect();
        let best = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expect = rates.iter().position(|&x| x == best).unwrap();
        if argmax_bin(&bins) != expect {
            bad += 1;
        }
    }
    Check::new("lookup argmax vs exhaustive 90-bin maximum", bad == 0, format!("{bad} of 1000 tables differ"))
}

pub fn check_height_scans(seed: u64) -> Check {
    let cfg = TerrainConfig::default();
    let mut r = rng::stream(seed, "verify/scan", 0);
    let mut bad = 0;
    let mut errors = 0;
    for i in 0..1000u64 {
        let mode = if i % 2 == 0 {
            TrackMode::Multi
        } else {
            TrackMode::Single(PolicyKind::ALL[(i / 2 % 4) as usize])
        };
        let Ok(track) = generate_track(&cfg, r.random(), mode) else {
            errors += 1;
            continue;
        };
        for _ in 0..5 {
            let x = r.random_range(-1.0..track.total_length + 1.0);
            let z = track.height_at(x) + r.random_range(-0.5..3.0);
            let s = track.height_scan(x, z);
            if s.values.len() != SCAN_LEN || s.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                bad += 1;
            }
        }
    }
    Check::new(
        "height scans in [0,1] with 60 samples",
        bad == 0 && errors == 0,
        format!("{bad} bad scans, {errors} generation errors over 1000 tracks"),
    )
}

pub fn check_track_validator(seed: u64) -> Check {
    let cfg = TerrainConfig::default();
    let mut failures = Vec::new();
    for i in 0..1000u64 {
        let s = seed.wrapping_add(i);
        let mode = if i % 4 == 0 {
            TrackMode::Single(PolicyKind::SPECIALISTS[(i / 4 % 3) as usize])
        } else {
            TrackMode::Multi
        };
        let res = generate_track(&cfg, s, mode)
            .map_err(|e| e.to_string())
            .and_then(|t| validate_track(&t, &cfg));
        if let Err(e) = res {
            failures.push(format!("seed {s}: {e}"));
        }
    }
    Check::new(
        "track validator over 1000 seeds",
        failures.is_empty(),
        failures.first().cloned().unwrap_or_else(|| "all valid".into()),
    )
}

pub fn check_balanced_batches(seed: u64) -> Check {
    let mut r = rng::stream(seed, "verify/batches", 0);
    let mut worst = 0i64;
    let mut empty = 0;
    for _ in 0..200 {
        let n = r.random_range(2..500);
        let p = r.random_range(0.02..0.98);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(p)).collect();
        labels[0] = true;
        labels[1] = false;
        let batch = r.random_range(2..300);
        let batches = balanced_batches(&labels, batch, 4, &mut r);
        if batches.len() != 4 {
            empty += 1;
        }
        for b in batches {
            let pos = b.iter().filter(|&&i| labels[i]).count() as i64;
            worst = worst.max((2 * pos - b.len() as i64).abs());
        }
    }
    Check::new(
        "minibatches balanced 50/50 within one",
        worst <= 1 && empty == 0,
        format!("max |pos - neg| = {worst}"),
    )
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        check_gae(seed),
        check_gradients(seed),
        check_lookup_argmax(seed),
        check_height_scans(seed),
        check_track_validator(seed),
        check_balanced_batches(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for c in run_all(7) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn oracle_matches_closed_form_two_step() {
        let a = discounted_oracle(&[1.0, 1.0], &[0.5, 0.5, 0.0], &[false, true], 0.9, 0.95);
        let d0: f64 = 1.0 + 0.9 * 0.5 - 0.5;
        assert!((a[0] - (d0 + 0.9 * 0.95 * 0.5)).abs() < 1e-15);
    }
}
