use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use snn_core::datasets::pavlov::{gen_pavlov, ComboSplit, PavlovConfig, SplitSide};
use snn_core::datasets::pong::gen_pong;
use snn_core::datasets::{Dataset, EPISODES_FORMAT};
use snn_core::engine::Engine;
use snn_core::params::ParameterSet;
use snn_core::probe::probe_rollout;
use snn_core::topology::{build_random, load_topology, NetworkTopology, TOPOLOGY_FORMAT};
use snn_core::training::checkpoint::CHECKPOINT_FORMAT;
use snn_core::training::metrics::append_row;
use snn_core::training::{
    eval_pavlov_acquisition, eval_pong_closed_loop, random_baseline, Checkpoint, EvalPlan,
    EvalTask, NetModel, NetPolicy, TrainError, Trainer,
};
use snn_core::verify::{run_suite, Suite};
use snn_core::autodiff::sequence_loss;

use crate::config::{RunConfig, Task};
use crate::error::{CliResult, Failure};
use crate::{EvalArgs, GenArgs, GenKind, Metric, ProbeArgs, RandomArgs, Side, TrainArgs, VerifyArgs};

pub fn version_text() -> String {
    format!(
        "snn {}\ntopology format {TOPOLOGY_FORMAT}\nepisode format {EPISODES_FORMAT}\ncheckpoint format {CHECKPOINT_FORMAT}\n",
        snn_core::VERSION
    )
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, value: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Failure::usage(format!("invalid {what} {value:?}")))
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    Dataset::load(path).map_err(|e| {
        let f = Failure::from(e);
        Failure { message: format!("{}: {}", path.display(), f.message), ..f }
    })
}

fn load_topology_file(path: &Path) -> CliResult<NetworkTopology> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path.display(), e))?;
    load_topology(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Failure::io(dir.display(), e))
        }
        _ => Ok(()),
    }
}

fn dataset_summary(d: &Dataset) -> String {
    let lens: Vec<usize> = d.episodes.iter().map(|e| e.len()).collect();
    let min = lens.iter().min().copied().unwrap_or(0);
    let max = lens.iter().max().copied().unwrap_or(0);
    let mean = if lens.is_empty() { 0.0 } else { lens.iter().sum::<usize>() as f64 / lens.len() as f64 };
    format!(
        "generator={} episodes={} steps_min={min} steps_mean={mean:.2} steps_max={max} inputs={} outputs={} sha256={}",
        d.manifest.generator,
        d.len(),
        d.dims().inputs,
        d.dims().outputs,
        d.content_hash()
    )
}

pub fn gen(a: GenArgs) -> CliResult {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let dataset = match a.kind {
        GenKind::Pavlov => {
            let mut p = if a.paper_exact {
                PavlovConfig::paper_exact(cfg.pavlov.episodes, cfg.pavlov.seed)
            } else {
                cfg.pavlov
            };
            if let Some(n) = a.episodes {
                p.episodes = n;
            }
            if let Some(s) = a.seed {
                p.seed = s;
            }
            if let Some(noise) = a.noise {
                p.noise_p = noise;
            }
            if let Some(side) = a.split {
                let side = match side {
                    Side::Train => SplitSide::Train,
                    Side::Heldout => SplitSide::Heldout,
                };
                p.split = Some(ComboSplit { fraction: a.split_fraction, salt: a.split_salt, side });
            }
            gen_pavlov(&p)?
        }
        GenKind::Pong => {
            let mut p = cfg.pong;
            if let Some(n) = a.episodes {
                p.episodes = n;
            }
            if let Some(s) = a.seed {
                p.seed = s;
            }
            if let Some(m) = a.max_steps {
                p.max_steps = m;
            }
            if let Some(noise) = a.expert_noise {
                p.expert_noise_p = noise;
            }
            gen_pong(&p)?
        }
    };
    ensure_parent(&a.out)?;
    dataset.save(&a.out).map_err(|e| Failure::io(a.out.display(), e))?;
    println!("wrote {}", a.out.display());
    println!("{}", dataset_summary(&dataset));
    Ok(())
}

pub fn random_topology(a: RandomArgs) -> CliResult {
    let mut spec = RunConfig::load(a.config.as_deref())?.random_topology;
    if let Some(v) = a.inputs {
        spec.n_inputs = v;
    }
    if let Some(v) = a.outputs {
        spec.n_outputs = v;
    }
    if let Some(v) = a.hidden {
        spec.n_hidden = v;
    }
    if let Some(v) = a.density {
        spec.density = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(m) = &a.model {
        spec.model = parse_enum("model", m)?;
    }
    if let Some(r) = &a.rule {
        spec.hidden_rule = parse_enum("rule", r)?;
    }
    let t = build_random(&spec)?;
    ensure_parent(&a.out)?;
    t.save(&a.out)?;
    println!("wrote {}", a.out.display());
    println!(
        "neurons={} edges={} plastic_edges={} sha256={}",
        t.len(),
        t.edges().len(),
        t.plastic_edges().len(),
        t.content_hash()
    );
    Ok(())
}

fn topology_summary(t: &NetworkTopology) -> String {
    let mut s = format!(
        "kind=topology neurons={} inputs={} outputs={} edges={} plastic_edges={} sha256={}",
        t.len(),
        t.inputs().len(),
        t.outputs().len(),
        t.edges().len(),
        t.plastic_edges().len(),
        t.content_hash()
    );
    for w in t.warnings() {
        s.push_str(&format!("\nwarning: {w}"));
    }
    s
}

pub fn inspect(path: &Path) -> CliResult {
    let bytes = fs::read(path).map_err(|e| Failure::io(path.display(), e))?;
    let head: serde_json::Value = {
        let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
        serde_json::from_slice(first).or_else(|_| serde_json::from_slice(&bytes)).unwrap_or_default()
    };
    match head.get("format").and_then(|f| f.as_str()) {
        Some(TOPOLOGY_FORMAT) => {
            println!("{}", topology_summary(&load_topology(&bytes)?));
        }
        Some(EPISODES_FORMAT) => {
            println!("kind=dataset {}", dataset_summary(&load_dataset(path)?));
        }
        Some(CHECKPOINT_FORMAT) => {
            let text = String::from_utf8_lossy(&bytes);
            let ck = Checkpoint::from_json(&text, true)?;
            let verified = Checkpoint::from_json(&text, false).is_ok();
            println!(
                "kind=checkpoint epoch={} params={} diverged={} hashes_verified={verified} config_hash={} topology_hash={}",
                ck.epoch,
                ck.params.len(),
                ck.diverged,
                ck.config_hash,
                ck.topology_hash
            );
        }
        _ => return Err(Failure::usage(format!("{}: unrecognized file", path.display()))),
    }
    Ok(())
}

fn resolve_train(a: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.topology, &a.topology);
    set(&mut cfg.data, &a.data);
    set(&mut cfg.eval_data, &a.eval_data);
    set(&mut cfg.run_dir, &a.run_dir);
    if let Some(t) = a.task {
        cfg.task = t;
    }
    let tc = &mut cfg.train;
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.lr {
        tc.lr = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    if let Some(v) = a.workers {
        tc.workers = v;
    }
    cfg.run_dir = Some(cfg.resolved_run_dir());
    cfg.train.check().map_err(Failure::from)?;
    Ok(cfg)
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> CliResult {
    ck.save(path).map_err(|e| Failure::io(path.display(), e))
}

pub fn train(a: TrainArgs) -> CliResult {
    let cfg = resolve_train(&a)?;
    let topo_path = cfg.topology.clone().ok_or_else(|| Failure::usage("no topology given"))?;
    let data_path = cfg.data.clone().ok_or_else(|| Failure::usage("no training data given"))?;
    let topology = load_topology_file(&topo_path)?;
    let dataset = load_dataset(&data_path)?;
    let eval_data = cfg.eval_data.as_deref().map(load_dataset).transpose()?;
    let task = match cfg.task {
        Task::None => EvalTask::None,
        Task::Pavlov => EvalTask::Pavlov,
        Task::Pong => EvalTask::Pong(cfg.pong_eval),
    };
    let plan = EvalPlan { dataset: eval_data, task };
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path, a.force).map_err(|e| match e {
                TrainError::Io(io) => Failure::io(path.display(), io),
                other => other.into(),
            })?;
            Trainer::resume(&topology, &dataset, cfg.train.clone(), plan, &ck, a.force)?
        }
        None => Trainer::new(&topology, &dataset, cfg.train.clone(), plan)?,
    };

    let run_dir = cfg.run_dir.clone().expect("resolved");
    fs::create_dir_all(&run_dir).map_err(|e| Failure::io(run_dir.display(), e))?;
    let echo = run_dir.join("resolved_config.toml");
    fs::write(&echo, cfg.to_toml()).map_err(|e| Failure::io(echo.display(), e))?;
    if a.resume.is_none() {
        for name in ["metrics.csv", "timing.csv"] {
            let p = run_dir.join(name);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| Failure::io(p.display(), e))?;
            }
        }
    }

    while trainer.epoch() < cfg.train.epochs {
        let row = match trainer.run_epoch() {
            Ok(row) => row,
            Err(TrainError::Diverged { epoch, reason, checkpoint }) => {
                let dump = run_dir.join("diverged.json");
                write_checkpoint(&dump, &checkpoint)?;
                return Err(Failure {
                    code: crate::error::DIVERGED,
                    message: format!("diverged at epoch {epoch}: {reason}; state saved to {}", dump.display()),
                });
            }
            Err(e) => return Err(e.into()),
        };
        append_row(&run_dir, &row).map_err(|e| Failure::io(run_dir.display(), e))?;
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        println!(
            "epoch={} train_loss={:.6} eval_loss={} task_metric={}",
            row.epoch,
            row.train_loss,
            opt(row.eval_loss),
            opt(row.task_metric)
        );
        let stride = cfg.train.checkpoint_stride;
        if stride > 0 && row.epoch % stride == 0 {
            write_checkpoint(&run_dir.join(format!("checkpoint-epoch-{}.json", row.epoch)), &trainer.checkpoint())?;
        }
    }
    let last = run_dir.join("checkpoint.json");
    write_checkpoint(&last, &trainer.checkpoint())?;
    println!("checkpoint={}", last.display());
    Ok(())
}

fn load_checkpoint(path: &Path, force: bool) -> CliResult<(Checkpoint, NetworkTopology, ParameterSet)> {
    let ck = Checkpoint::load(path, force).map_err(|e| match e {
        TrainError::Io(io) => Failure::io(path.display(), io),
        other => other.into(),
    })?;
    let topology = ck.topology()?;
    let params = ck.param_set(&topology)?;
    Ok((ck, topology, params))
}

pub fn eval(a: EvalArgs) -> CliResult {
    let (ck, topology, params) = load_checkpoint(&a.checkpoint, a.force)?;
    let ticks = ck.config.ticks_per_step;
    let need_data = || -> CliResult<Dataset> {
        let path = a.data.as_deref().ok_or_else(|| Failure::usage("this metric needs --data"))?;
        load_dataset(path)
    };
    match a.metric {
        Metric::Acquisition => {
            let d = need_data()?;
            let model = NetModel { topology: &topology, params: &params, ticks_per_step: ticks, loss: ck.config.loss };
            let report = eval_pavlov_acquisition(&model, &d)?;
            println!("acquisition_accuracy={} episodes={}", report.accuracy, report.episodes.len());
            let max_m = report.episodes.iter().map(|v| v.m).max().unwrap_or(0);
            for m in 0..=max_m {
                if let Some(acc) = report.accuracy_where(|x| x == m) {
                    let n = report.episodes.iter().filter(|v| v.m == m).count();
                    println!("m={m} episodes={n} accuracy={acc}");
                }
            }
        }
        Metric::Pong => {
            let mut cfg = snn_core::training::PongEvalConfig::default();
            if let Some(n) = a.rollouts {
                cfg.rollouts = n;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let mut policy = NetPolicy::new(&topology, &params, ticks)?;
            let net = eval_pong_closed_loop(&mut policy, &cfg)?;
            let base = random_baseline(&cfg);
            println!(
                "hit_rate={} baseline_random={} mean_length={} rollouts={} approaches={}",
                net.hit_rate, base.hit_rate, net.mean_length, cfg.rollouts, net.approaches
            );
        }
        Metric::Loss => {
            let d = need_data()?;
            let mut total = 0.0;
            for ep in &d.episodes {
                let held = ep.expand_ticks(ticks);
                total += sequence_loss(&topology, &params, &held.x, &held.y, held.mask.as_deref(), ck.config.loss)
                    .map_err(TrainError::from)?;
            }
            let mean = if d.is_empty() { 0.0 } else { total / d.len() as f64 };
            println!("eval_loss={mean} episodes={}", d.len());
        }
    }
    Ok(())
}

pub fn verify(a: VerifyArgs) -> CliResult {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse().map_err(Failure::usage)?]
    };
    let mut all_ok = true;
    for suite in suites {
        let report = run_suite(suite, a.seed);
        for c in &report.checks {
            println!("{c}");
        }
        println!("{}", report.summary());
        all_ok &= report.passed();
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure { code: 1, message: "verification failed".into() })
    }
}

pub fn probe(a: ProbeArgs) -> CliResult {
    let (topology, params) = match (&a.checkpoint, &a.topology) {
        (Some(ck), None) => {
            let (_, t, p) = load_checkpoint(ck, a.force)?;
            (t, p)
        }
        (None, Some(path)) => {
            let t = load_topology_file(path)?;
            let p = ParameterSet::from_topology(&t);
            (t, p)
        }
        _ => return Err(Failure::usage("give exactly one of --checkpoint or --topology")),
    };
    if a.ticks == 0 {
        return Err(Failure::usage("--ticks must be positive"));
    }
    let d = load_dataset(&a.data)?;
    let ep = d
        .episodes
        .get(a.episode)
        .ok_or_else(|| Failure::usage(format!("episode {} out of range ({} episodes)", a.episode, d.len())))?;
    if d.dims().inputs != topology.inputs().len() {
        return Err(Failure::usage(format!(
            "dataset has {} inputs, topology {}",
            d.dims().inputs,
            topology.inputs().len()
        )));
    }
    let xs = ep.expand_ticks(a.ticks).x;
    ensure_parent(&a.out)?;
    let file = fs::File::create(&a.out).map_err(|e| Failure::io(a.out.display(), e))?;
    let engine = Engine::new(&topology, &params);
    probe_rollout(&engine, &xs, a.edge_stride, BufWriter::new(file)).map_err(|e| match e {
        snn_core::probe::ProbeError::Io(io) => Failure::io(a.out.display(), io),
        other => Failure { code: crate::error::DIVERGED, message: other.to_string() },
    })?;
    println!("wrote {} steps={}", a.out.display(), xs.len());
    Ok(())
}
