//! Subcommand implementations shared by the binary and the tests.

use std::fmt::Write as _;
use std::path::Path;

use funnel_core::eval::{evaluate, reports_csv, reports_table, run_trial, single_terrain_eval, trial_seeds, Control, Controllers, Report, TraceRow, TrialRecord};
use funnel_core::rl::{train_policy, LogRow, TrainedPolicy};
use funnel_core::switch::{build_lookup, collect_switch_data, train_estimator, LookupTable, PolicySet, SwitchDataset, SwitchEstimator, SwitchStrategy};
use funnel_core::terrain::{generate_track, validate_track, PolicyKind, TrackMode};
use funnel_core::verify::{self, Check};

use crate::artifacts::{write_file, ArtifactDir, Provenance};
use crate::config::{RunConfig, DIR_ENV};
use crate::CliError;

/// A resolved configuration bound to its artifact directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub dir: ArtifactDir,
}

impl Context {
    /// The artifact directory comes from the environment when set.
    pub fn new(cfg: RunConfig) -> Context {
        let root = std::env::var_os(DIR_ENV)
            .map(Into::into)
            .unwrap_or_else(|| cfg.artifact_dir.clone());
        Self::with_dir(cfg, root)
    }

    pub fn with_dir(cfg: RunConfig, root: impl Into<std::path::PathBuf>) -> Context {
        Context {
            cfg,
            dir: ArtifactDir::new(root),
        }
    }

    fn provenance(&self, command: &str) -> Provenance {
        Provenance {
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            command: command.to_string(),
        }
    }

    /// Record the resolved configuration and its hash beside the outputs.
    fn write_config(&self, command: &str) -> Result<(), CliError> {
        let p = self.provenance(command);
        let resolved = RunConfig {
            artifact_dir: self.dir.root.clone(),
            ..self.cfg.clone()
        };
        self.dir.write(&self.dir.root.join("config.toml"), &resolved.to_toml(), &p)?;
        self.dir
            .write(&self.dir.root.join("config.hash"), &format!("{}\n", p.config_hash), &p)
    }

    fn load_policy(&self, kind: PolicyKind) -> Result<TrainedPolicy, CliError> {
        let path = self.dir.policy(kind);
        self.dir.require(&path)?;
        Ok(TrainedPolicy::load(&path)?)
    }

    pub fn load_policies(&self, kinds: &[PolicyKind]) -> Result<PolicySet, CliError> {
        let mut set = PolicySet::new();
        for &k in kinds {
            set.insert(self.load_policy(k)?);
        }
        Ok(set)
    }

    fn load_estimator(&self, kind: PolicyKind) -> Result<SwitchEstimator, CliError> {
        let path = self.dir.estimator(kind);
        self.dir.require(&path)?;
        Ok(SwitchEstimator::load(&path)?)
    }

    fn load_lookup(&self) -> Result<LookupTable, CliError> {
        let path = self.dir.lookup();
        self.dir.require(&path)?;
        Ok(LookupTable::load(&path)?)
    }
}

pub fn track_file_name(mode: TrackMode, seed: u64) -> String {
    let m = match mode {
        TrackMode::Multi => "multi".to_string(),
        TrackMode::Single(k) => format!("single-{}", k.name()),
    };
    format!("{m}-{seed}.track")
}

pub fn gen_track(ctx: &Context, mode: TrackMode) -> Result<String, CliError> {
    ctx.write_config("gen-track")?;
    let cfg = &ctx.cfg;
    let track = generate_track(&cfg.terrain, cfg.seed, mode)?;
    validate_track(&track, &cfg.terrain).map_err(|e| CliError::Other(format!("track failed validation: {e}")))?;
    let path = ctx.dir.track(&track_file_name(mode, cfg.seed));
    ctx.dir.write(&path, &track.to_text(), &ctx.provenance("gen-track"))?;
    let kinds: Vec<&str> = track.artifacts.iter().map(|a| a.kind.name()).collect();
    Ok(format!(
        "wrote {}\nlength {:.3} m, artifacts: {}\nvalidator: pass",
        path.display(),
        track.total_length,
        kinds.join(" ")
    ))
}

pub fn train_policy_cmd(ctx: &Context, kind: PolicyKind, on_iter: &mut dyn FnMut(&LogRow)) -> Result<TrainedPolicy, CliError> {
    ctx.write_config("train-policy")?;
    let cfg = &ctx.cfg;
    let mut log = String::from(LogRow::CSV_HEADER);
    log.push('\n');
    let policy = train_policy(kind, &cfg.env_settings(), &cfg.train, cfg.seed, &mut |row| {
        log.push_str(&row.to_csv());
        log.push('\n');
        on_iter(row);
    })?;
    let p = ctx.provenance("train-policy");
    ctx.dir.write(&ctx.dir.training_log(kind), &log, &p)?;
    ctx.dir.write(&ctx.dir.policy(kind), &policy.to_text(), &p)?;
    Ok(policy)
}

fn specialists_or(kind: Option<PolicyKind>) -> Result<Vec<PolicyKind>, CliError> {
    match kind {
        Some(PolicyKind::Walk) => Err(CliError::Usage("switch data and estimators exist for stairs, gap and step only".into())),
        Some(k) => Ok(vec![k]),
        None => Ok(PolicyKind::SPECIALISTS.to_vec()),
    }
}

pub fn collect_switch(ctx: &Context, kind: Option<PolicyKind>) -> Result<Vec<SwitchDataset>, CliError> {
    let kinds = specialists_or(kind)?;
    let policies = ctx.load_policies(&PolicyKind::ALL)?;
    ctx.write_config("collect-switch")?;
    let cfg = &ctx.cfg;
    let settings = cfg.switch_settings();
    let mut out = Vec::new();
    for k in kinds {
        let ds = collect_switch_data(&settings, &policies, k, cfg.switch.n_samples, cfg.seed, &PolicyKind::ALL, &cfg.hash())?;
        ctx.dir.write(&ctx.dir.dataset(k), &ds.to_text(), &ctx.provenance("collect-switch"))?;
        out.push(ds);
    }
    Ok(out)
}

pub fn train_estimator_cmd(ctx: &Context, kind: Option<PolicyKind>) -> Result<String, CliError> {
    let kinds = specialists_or(kind)?;
    for &k in &kinds {
        ctx.dir.require(&ctx.dir.dataset(k))?;
    }
    ctx.write_config("train-estimator")?;
    let cfg = &ctx.cfg;
    let p = ctx.provenance("train-estimator");
    let mut summary = String::new();
    for k in kinds {
        let ds = SwitchDataset::load(&ctx.dir.dataset(k))?;
        let (est, rep) = train_estimator(&ds, &cfg.switch, cfg.switch.epochs, cfg.seed)?;
        ctx.dir.write(&ctx.dir.estimator(k), &est.to_text(), &p)?;
        let mut text = format!(
            "estimator {}\nsamples {} (positive {})\n",
            k.name(),
            ds.samples.len(),
            ds.positives()
        );
        for (src, n) in ds.counts_by_source() {
            let _ = writeln!(text, "from {src}: {n}");
        }
        let _ = writeln!(
            text,
            "epochs {}\ntrain points {}\nvalidation points {}\ntrain loss {:.6}\nvalidation loss {:.6}\nvalidation accuracy {:.4}",
            cfg.switch.epochs, rep.train_points, rep.validation_points, rep.train_loss, rep.validation_loss, rep.validation_accuracy
        );
        ctx.dir.write(&ctx.dir.report(&format!("estimator-{}.txt", k.name())), &text, &p)?;
        summary.push_str(&text);
    }
    Ok(summary)
}

pub fn build_lookup_cmd(ctx: &Context) -> Result<LookupTable, CliError> {
    let policies = ctx.load_policies(&PolicyKind::ALL)?;
    ctx.write_config("build-lookup")?;
    let cfg = &ctx.cfg;
    let table = build_lookup(&cfg.switch_settings(), &policies, cfg.switch.per_bin_trials, cfg.seed)?;
    ctx.dir.write(&ctx.dir.lookup(), &table.to_text(), &ctx.provenance("build-lookup"))?;
    Ok(table)
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), CliError> {
    let mut s = String::from(TraceRow::HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    write_file(path, &s)
}

fn trace_first_trial(ctx: &Context, ctl: &Controllers, control: Control, mode: TrackMode, path: &Path) -> Result<(), CliError> {
    let (track_seed, trial_seed) = trial_seeds(ctx.cfg.seed, 0);
    let track = generate_track(&ctx.cfg.terrain, track_seed, mode)?;
    let mut rows = Vec::new();
    run_trial(&ctx.cfg.eval_settings(), ctl, control, &track, trial_seed, Some(&mut rows))?;
    write_trace(path, &rows)
}

pub fn eval_single(ctx: &Context, kind: PolicyKind, trials: Option<usize>, trace: Option<&Path>) -> Result<Report, CliError> {
    let ctl = Controllers {
        policies: ctx.load_policies(&[kind])?,
        ..Default::default()
    };
    ctx.write_config("eval-single")?;
    let cfg = &ctx.cfg;
    let n = trials.unwrap_or(cfg.eval.single_trials);
    let (report, _) = single_terrain_eval(&cfg.eval_settings(), &ctl, kind, n, cfg.seed, &cfg.hash())?;
    let p = ctx.provenance("eval-single");
    let reports = std::slice::from_ref(&report);
    ctx.dir.write(&ctx.dir.report(&format!("single-{}.csv", kind.name())), &reports_csv(reports), &p)?;
    ctx.dir.write(&ctx.dir.report(&format!("single-{}.txt", kind.name())), &reports_table(reports), &p)?;
    if let Some(path) = trace {
        trace_first_trial(ctx, &ctl, Control::Fixed(kind), TrackMode::Single(kind), path)?;
    }
    Ok(report)
}

/// Load everything the strategies need, failing on the first missing file.
pub fn load_controllers(ctx: &Context, strategies: &[SwitchStrategy]) -> Result<Controllers, CliError> {
    let mut ctl = Controllers {
        policies: ctx.load_policies(&PolicyKind::ALL)?,
        ..Default::default()
    };
    if strategies.contains(&SwitchStrategy::Estimator) {
        for k in PolicyKind::SPECIALISTS {
            ctl.add_estimator(ctx.load_estimator(k)?);
        }
    }
    if strategies.contains(&SwitchStrategy::Lookup) {
        ctl.lookup = Some(ctx.load_lookup()?);
    }
    Ok(ctl)
}

pub fn eval_compare(
    ctx: &Context,
    strategies: &[SwitchStrategy],
    trials: Option<usize>,
    trace: Option<&Path>,
) -> Result<Vec<(Report, Vec<TrialRecord>)>, CliError> {
    let ctl = load_controllers(ctx, strategies)?;
    ctx.write_config("eval-compare")?;
    let cfg = &ctx.cfg;
    let n = trials.unwrap_or(cfg.eval.n_trials);
    let settings = cfg.eval_settings();
    let mut results = Vec::new();
    for &s in strategies {
        results.push(evaluate(&settings, &ctl, s, n, cfg.seed, &cfg.hash())?);
        if let Some(path) = trace {
            let path = if strategies.len() == 1 {
                path.to_path_buf()
            } else {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                path.with_file_name(format!("{stem}-{}.csv", s.name()))
            };
            trace_first_trial(ctx, &ctl, Control::Switching(s), TrackMode::Multi, &path)?;
        }
    }
    let reports: Vec<Report> = results.iter().map(|(r, _)| r.clone()).collect();
    let p = ctx.provenance("eval-compare");
    ctx.dir.write(&ctx.dir.report("compare.csv"), &reports_csv(&reports), &p)?;
    ctx.dir.write(&ctx.dir.report("compare.txt"), &reports_table(&reports), &p)?;
    Ok(results)
}

pub fn verify_cmd(seed: u64) -> (Vec<Check>, String) {
    let checks = verify::run_all(seed);
    let mut s = String::new();
    for c in &checks {
        let _ = writeln!(s, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    (checks, s)
}
