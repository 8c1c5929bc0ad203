use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use midm::baselines::{self, BaselineConfig, ReferenceSet};
use midm::evalstats::{
    foil_accuracy, lowest_of_three_accuracy, Aggregation, JudgmentTable, TauVariant, TieRule,
};
use midm::gaussmi::{EpsilonPreset, DEFAULT_EPSILON};
use midm::harness::{self, SyntheticSpec};
use midm::matstat::{covariance, mean};
use midm::store::{self, digest_file, PairPaths};
use midm::{EmbeddingSet, Error, GaussianJointModel, Manifest, PairBatch};

use crate::report::{self, num};
use crate::{
    Aggregate, BaselineArgs, CliError, Command, CorrArgs, EpsPreset, FitArgs, FoilArgs, Metric,
    MidArgs, ParsimonyArgs, PmiArgs, ReasonArgs, ShuffleArgs, SynthArgs, Tau, TieName,
};

type CmdResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Lib(Error::Io { path: "<stdout>".into(), source: e }))
}

/// Writes to `path` atomically, or to stdout when there is no path.
fn emit_to(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => Ok(store::write_atomic(p, text.as_bytes())?),
        None => emit(out, text),
    }
}

fn epsilon_from(eps: Option<f64>, preset: Option<EpsPreset>) -> Result<Option<f64>, CliError> {
    match (eps, preset) {
        (Some(e), _) if !e.is_finite() || e < 0.0 => {
            Err(usage(format!("--eps must be finite and >= 0, got {e}")))
        }
        (Some(e), _) => Ok(Some(e)),
        (None, Some(EpsPreset::Default)) => Ok(Some(EpsilonPreset::Default.value())),
        (None, Some(EpsPreset::Foil)) => Ok(Some(EpsilonPreset::Foil.value())),
        (None, None) => Ok(None),
    }
}

fn digests(entries: &[(&str, &Path)]) -> Result<std::collections::BTreeMap<String, String>, CliError> {
    entries
        .iter()
        .map(|(k, p)| Ok((k.to_string(), digest_file(p)?)))
        .collect()
}

fn tau_variant(t: Tau) -> TauVariant {
    match t {
        Tau::B => TauVariant::B,
        Tau::C => TauVariant::C,
    }
}

fn aggregation(a: Aggregate) -> Aggregation {
    match a {
        Aggregate::Median => Aggregation::Median,
        Aggregate::PerJudgment => Aggregation::PerJudgment,
    }
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Fit(a) => fit(a, out),
        Command::Mid(a) => mid(a, out),
        Command::Pmi(a) => pmi(a, out),
        Command::Baseline(a) => baseline(a, out),
        Command::ShuffleCurve(a) => shuffle_curve(a, out),
        Command::Parsimony(a) => parsimony(a, out),
        Command::FoilAcc(a) => foil_acc(a, out),
        Command::ReasonAcc(a) => reason_acc(a, out),
        Command::Corr(a) => corr(a, out),
        Command::Synth(a) => synth(a, out),
    }
}

fn fit(a: &FitArgs, out: &mut dyn Write) -> CmdResult {
    let mut manifest = match &a.manifest {
        Some(p) => Manifest::load(p)?,
        None => Manifest::default(),
    };
    for o in &a.overrides {
        manifest.apply_override(o).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(eps) = epsilon_from(a.eps, a.eps_preset)? {
        manifest.epsilon = eps;
    }
    let paths = match (&a.x, &a.y, manifest.reference.take()) {
        (Some(x), Some(y), _) => PairPaths { x: x.clone(), y: y.clone() },
        (None, None, Some(p)) => p,
        (x, y, Some(p)) => PairPaths {
            x: x.clone().unwrap_or(p.x),
            y: y.clone().unwrap_or(p.y),
        },
        _ => return Err(usage("fit needs --x and --y (or a manifest with reference paths)")),
    };
    let x = store::read_embeddings(&paths.x)?;
    let y = store::read_embeddings(&paths.y)?;
    if x.n() != y.n() {
        return Err(CliError::Lib(Error::InvalidArgument(format!(
            "reference files disagree on n: x ({}) has {} rows, y ({}) has {} rows",
            paths.x.display(),
            x.n(),
            paths.y.display(),
            y.n()
        ))));
    }
    let model = midm::fit_reference(&x, &y, manifest.epsilon)?;
    store::save_model(&model, &a.out)?;

    manifest.command = Some("fit".into());
    manifest.input_digests = digests(&[
        ("reference.x", &paths.x),
        ("reference.y", &paths.y),
        ("model", &a.out),
    ])?;
    manifest.reference = Some(paths);
    report::write_sidecar(&a.out, &manifest)?;
    emit(
        out,
        &format!("mi\t{}\nn_ref\t{}\nepsilon\t{}\n", num(model.mi()), model.n_ref(), num(model.epsilon())),
    )
}

fn load_batch(x: &Path, y: &Path) -> Result<PairBatch, CliError> {
    let xs = store::read_embeddings(x)?;
    let ys = store::read_embeddings(y)?;
    Ok(PairBatch::from_sets(&xs, &ys)?)
}

fn mid(a: &MidArgs, out: &mut dyn Write) -> CmdResult {
    let model = store::load_model(&a.model)?;
    let batch = load_batch(&a.x, &a.y)?;
    let rep = midm::mid(&model, &batch)?;
    let text = if a.pretty {
        report::score_report_pretty(&rep, model.epsilon())
    } else {
        report::score_report(&rep, model.epsilon())
    };
    emit_to(out, a.report.as_deref(), &text)?;
    if let Some(path) = &a.report {
        let manifest = Manifest {
            command: Some("mid".into()),
            epsilon: model.epsilon(),
            evaluation: Some(PairPaths { x: a.x.clone(), y: a.y.clone() }),
            input_digests: digests(&[("model", &a.model), ("evaluation.x", &a.x), ("evaluation.y", &a.y)])?,
            ..Manifest::default()
        };
        report::write_sidecar(path, &manifest)?;
    }
    Ok(())
}

fn pmi(a: &PmiArgs, out: &mut dyn Write) -> CmdResult {
    let model = store::load_model(&a.model)?;
    let (x, y) = match (&a.x_vec, &a.y_vec, &a.x, &a.y, a.row) {
        (Some(x), Some(y), None, None, None) => (x.clone(), y.clone()),
        (None, None, Some(xp), Some(yp), Some(row)) => {
            let batch = load_batch(xp, yp)?;
            if row >= batch.len() {
                return Err(CliError::Lib(Error::InvalidArgument(format!(
                    "row {row} out of range for {} pairs",
                    batch.len()
                ))));
            }
            (batch.x_hat().row(row).to_vec(), batch.y_hat().row(row).to_vec())
        }
        _ => return Err(usage("pmi needs either --x-vec and --y-vec, or --x, --y and --row")),
    };
    let v = midm::pmi(&model, &x, &y)?;
    emit(out, &format!("{}\n", num(v)))
}

fn reference_sets(path: &Path, per_item: usize, items: usize) -> Result<Vec<ReferenceSet>, CliError> {
    if per_item == 0 {
        return Err(usage("--refs-per-item must be at least 1"));
    }
    let refs = store::read_embeddings(path)?;
    if refs.n() != items * per_item {
        return Err(CliError::Lib(Error::InvalidArgument(format!(
            "reference file has {} rows, expected {items} items x {per_item} references = {}",
            refs.n(),
            items * per_item
        ))));
    }
    (0..items)
        .map(|i| {
            let rows: Vec<usize> = (i * per_item..(i + 1) * per_item).collect();
            Ok(ReferenceSet::new(refs.data().select_rows(&rows))?)
        })
        .collect()
}

fn baseline(a: &BaselineArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = BaselineConfig::default();
    if let Some(w) = a.weight {
        cfg.clip_s_weight = w;
    }
    if let Some(al) = a.alpha {
        cfg.refmid_alpha = al;
    }
    if let Some(t) = a.temperature {
        cfg.infonce_temperature = t;
    }
    if let Some(c) = a.candidates {
        cfg.rprecision_candidates = c;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let xs = store::read_embeddings(&a.x)?;
    let ys = store::read_embeddings(&a.y)?;
    if a.metric == Metric::Fid {
        let (xm, ym) = (xs.data(), ys.data());
        let (mx, my) = (mean(xm)?, mean(ym)?);
        let v = baselines::fid(&mx, &covariance(xm, &mx)?, &my, &covariance(ym, &my)?)?;
        return emit_to(out, a.out.as_deref(), &format!("fid\t{}\n", num(v)));
    }
    let batch = PairBatch::from_sets(&xs, &ys)?;
    let n = batch.len();
    if n == 0 {
        return Err(CliError::Lib(Error::NoSamples));
    }
    let (bx, by) = (batch.x_hat(), batch.y_hat());
    let need_refs = || {
        a.refs
            .as_deref()
            .ok_or_else(|| usage("this metric needs --refs"))
            .and_then(|p| reference_sets(p, a.refs_per_item, n))
    };
    let (name, scores): (&str, Vec<f64>) = match a.metric {
        Metric::ClipS => (
            "clip_s",
            (0..n)
                .map(|i| baselines::clip_s(bx.row(i), by.row(i), &cfg))
                .collect::<midm::Result<_>>()?,
        ),
        Metric::RefclipS => {
            let refs = need_refs()?;
            (
                "ref_clip_s",
                (0..n)
                    .map(|i| baselines::ref_clip_s(bx.row(i), by.row(i), &refs[i], &cfg))
                    .collect::<midm::Result<_>>()?,
            )
        }
        Metric::Refmid => {
            let refs = need_refs()?;
            let model_path = a.model.as_deref().ok_or_else(|| usage("refmid needs --model"))?;
            let model: GaussianJointModel = store::load_model(model_path)?;
            let pmis = midm::mid(&model, &batch)?.pmi;
            (
                "ref_mid",
                (0..n)
                    .map(|i| baselines::ref_mid(pmis[i], by.row(i), &refs[i], &cfg))
                    .collect::<midm::Result<_>>()?,
            )
        }
        Metric::Infonce => (
            "infonce",
            (0..n)
                .map(|i| baselines::info_nce_score(bx.row(i), i, by, &cfg))
                .collect::<midm::Result<_>>()?,
        ),
        Metric::Rprec => {
            let seed = a.seed.ok_or_else(|| usage("rprec samples distractors and needs --seed"))?;
            if n < 2 {
                return Err(CliError::Lib(Error::InvalidArgument(
                    "rprec needs at least 2 pairs".into(),
                )));
            }
            let k = (cfg.rprecision_candidates - 1).min(n - 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut hits = Vec::with_capacity(n);
            for i in 0..n {
                // draw from the other n-1 rows, skipping i
                let rows: Vec<usize> = index::sample(&mut rng, n - 1, k)
                    .into_iter()
                    .map(|r| if r >= i { r + 1 } else { r })
                    .collect();
                let hit = baselines::r_precision(bx.row(i), by.row(i), &by.select_rows(&rows))?;
                hits.push(if hit { 1.0 } else { 0.0 });
            }
            ("rprec", hits)
        }
        Metric::Fid => unreachable!(),
    };
    let mean = scores.iter().sum::<f64>() / n as f64;
    emit_to(out, a.out.as_deref(), &report::item_scores(name, &scores, mean))
}

fn shuffle_curve(a: &ShuffleArgs, out: &mut dyn Write) -> CmdResult {
    let model = store::load_model(&a.model)?;
    let batch = load_batch(&a.x, &a.y)?;
    let curves = harness::shuffle_curves(&model, &batch, &a.ratios, a.repeats, a.seed)?;
    let points = harness::summarize(&curves);
    emit_to(out, a.out.as_deref(), &report::curve(&points))?;
    if let Some(path) = &a.out {
        let manifest = Manifest {
            command: Some("shuffle-curve".into()),
            epsilon: model.epsilon(),
            seed: Some(a.seed),
            evaluation: Some(PairPaths { x: a.x.clone(), y: a.y.clone() }),
            input_digests: digests(&[("model", &a.model), ("evaluation.x", &a.x), ("evaluation.y", &a.y)])?,
            ..Manifest::default()
        };
        report::write_sidecar(path, &manifest)?;
    }
    Ok(())
}

/// Scores aligned to the table rows; row ids are item indices, optionally
/// suffixed `#k` for per-judgment rows.
fn scores_for_table(table: &JudgmentTable, per_item: &[f64]) -> Result<Vec<f64>, CliError> {
    table
        .rows()
        .iter()
        .map(|r| {
            let base = r.id.split('#').next().unwrap_or(&r.id);
            let idx: usize = base.parse().map_err(|_| {
                CliError::Lib(Error::Format(format!("judgment id '{}' is not an item index", r.id)))
            })?;
            per_item.get(idx).copied().ok_or_else(|| {
                CliError::Lib(Error::Format(format!(
                    "judgment id '{}' is out of range for {} items",
                    r.id,
                    per_item.len()
                )))
            })
        })
        .collect()
}

fn read_table(path: &Path, agg: Aggregate) -> Result<JudgmentTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_owned(), source: e })?;
    Ok(JudgmentTable::parse_tsv(&text, aggregation(agg))?)
}

fn parsimony(a: &ParsimonyArgs, out: &mut dyn Write) -> CmdResult {
    let eps = epsilon_from(a.eps, a.eps_preset)?.unwrap_or(DEFAULT_EPSILON);
    let rx = store::read_embeddings(&a.ref_x)?;
    let ry = store::read_embeddings(&a.ref_y)?;
    if rx.n() != ry.n() {
        return Err(CliError::Lib(Error::InvalidArgument(format!(
            "reference files disagree on n: x has {} rows, y has {} rows",
            rx.n(),
            ry.n()
        ))));
    }
    let items = load_batch(&a.x, &a.y)?;
    let table = read_table(&a.judgments, a.aggregate)?;
    // validate ids against the item count before the expensive loop
    scores_for_table(&table, &vec![0.0; items.len()])?;
    let scorer = |subset: &[usize]| -> midm::Result<Vec<f64>> {
        let per_item = harness::subset_pmi_scores(rx.data(), ry.data(), subset, &items, eps)?;
        scores_for_table(&table, &per_item).map_err(|e| match e {
            CliError::Lib(e) => e,
            CliError::Usage(m) => Error::InvalidArgument(m),
        })
    };
    let points = harness::parsimony_curve(
        scorer,
        rx.n(),
        &a.fractions,
        &table,
        tau_variant(a.tau),
        a.repeats,
        a.seed,
    )?;
    emit_to(out, a.out.as_deref(), &report::curve(&points))?;
    if let Some(path) = &a.out {
        let manifest = Manifest {
            command: Some("parsimony".into()),
            epsilon: eps,
            seed: Some(a.seed),
            reference: Some(PairPaths { x: a.ref_x.clone(), y: a.ref_y.clone() }),
            evaluation: Some(PairPaths { x: a.x.clone(), y: a.y.clone() }),
            input_digests: digests(&[
                ("reference.x", &a.ref_x),
                ("reference.y", &a.ref_y),
                ("evaluation.x", &a.x),
                ("evaluation.y", &a.y),
                ("judgments", &a.judgments),
            ])?,
            ..Manifest::default()
        };
        report::write_sidecar(path, &manifest)?;
    }
    Ok(())
}

fn foil_acc(a: &FoilArgs, out: &mut dyn Write) -> CmdResult {
    let rule = match (a.tie, a.seed) {
        (TieName::Half, _) => TieRule::Half,
        (TieName::Random, Some(seed)) => TieRule::Random { seed },
        (TieName::Random, None) => return Err(usage("--tie random needs --seed")),
    };
    let gt = report::read_scores(&a.gt)?;
    let foil = report::read_scores(&a.foil)?;
    let acc = foil_accuracy(&gt, &foil, rule)?;
    emit(out, &format!("foil_accuracy\t{}\nn\t{}\ntie_rule\t{}\n", num(acc), gt.len(), rule.name()))
}

fn reason_acc(a: &ReasonArgs, out: &mut dyn Write) -> CmdResult {
    let real = report::read_scores(&a.real)?;
    let fake = report::read_scores(&a.fake)?;
    let foiled = report::read_scores(&a.foiled)?;
    let acc = lowest_of_three_accuracy(&real, &fake, &foiled)?;
    emit(out, &format!("reasoning_accuracy\t{}\nn\t{}\n", num(acc), real.len()))
}

fn corr(a: &CorrArgs, out: &mut dyn Write) -> CmdResult {
    let mut table = read_table(&a.judgments, a.aggregate)?;
    if let Some(p) = &a.scores {
        let per_item = report::read_scores(p)?;
        table = table.with_scores(&scores_for_table(&table, &per_item)?)?;
    }
    let variant = tau_variant(a.tau);
    let tau = table.tau(variant)?;
    let name = match a.tau {
        Tau::B => "tau_b",
        Tau::C => "tau_c",
    };
    emit(out, &format!("{name}\t{}\nn\t{}\n", num(tau), table.len()))
}

fn synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let spec = SyntheticSpec { dim: a.dim, rho: a.rho, n: a.n, seed: a.seed };
    let (x, y): (EmbeddingSet, EmbeddingSet) = harness::gen_synthetic(&spec)?;
    store::write_embeddings(&x, &a.out_x)?;
    store::write_embeddings(&y, &a.out_y)?;
    emit(out, &format!("closed_form_mi\t{}\nn\t{}\ndim\t{}\n", num(spec.closed_form_mi()), a.n, a.dim))
}
