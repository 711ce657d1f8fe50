use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdcae_core::config::RunConfig;
use fdcae_core::embed::AuxMode;
use fdcae_core::eval::{
    decode_utterance, format_summary, load_report, model_name, model_paths, run_all, write_losses,
    Arm, ErrorCount, LossRow, Pipeline, SIL_PHONE,
};
use fdcae_core::fdcae::{adapt, train, Condition, FdcaeModel, TrainReport};
use fdcae_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fdcae", about = "f-DcAE acoustic modeling lab")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model seed (train-am, adapt); for `matrix`, runs this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic adult, child and accented-child corpora.
    SynthCorpus,
    /// Speed-perturb the adult training set and pitch-shift the adult test set.
    Augment,
    /// Extract MFCCs and pitch tracks.
    Features,
    /// Compute standardised p-vectors.
    Pvectors,
    /// Train the speaker embedder and extract speaker vectors.
    Spkembed,
    /// Train the monophone GMM-HMM.
    TrainGmm,
    /// Force-align training and adaptation sets.
    Align,
    /// Estimate the phone bigram and write the denominator graphs.
    Graphs,
    /// Train one acoustic model.
    TrainAm {
        #[arg(long, default_value = "fdcae")]
        condition: Condition,
        #[arg(long, default_value = "i+p")]
        aux: AuxMode,
    },
    /// Adapt a trained model on child or accented-child data.
    Adapt {
        /// Model name as written by train-am, e.g. fdcae-i-s1.
        #[arg(long)]
        model: String,
        /// `adapt-child` or `adapt-accent`.
        #[arg(long, default_value = "adapt-child")]
        arm: Arm,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Decode a test set with a trained model.
    Decode {
        #[arg(long)]
        model: String,
        /// Report name of the test set, e.g. child or adult+300.
        #[arg(long)]
        test_set: String,
    },
    /// Score a hypothesis file against a test set.
    Score {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        test_set: String,
    },
    /// Prepare everything, run the full experiment matrix and write the report.
    Matrix,
    /// Print the summary of a finished matrix run.
    Report,
}

fn load_model(p: &Pipeline, name: &str) -> Result<FdcaeModel> {
    let (enc, dec) = model_paths(p, name);
    FdcaeModel::load(&enc, dec.exists().then_some(dec.as_path()))
}

fn save_model(p: &Pipeline, name: &str, model: &FdcaeModel, rep: &TrainReport, arm: Arm, seed: u64) -> Result<()> {
    let (enc, dec) = model_paths(p, name);
    std::fs::create_dir_all(enc.parent().unwrap()).map_err(|e| Error::Invalid(e.to_string()))?;
    model.save(&enc, model.decoder.is_some().then_some(dec.as_path()))?;
    let rows: Vec<LossRow> = rep
        .epochs
        .iter()
        .map(|e| LossRow {
            condition: model.condition,
            aux: model.aux_mode(),
            arm,
            seed,
            epoch: e.epoch,
            lr: e.lr,
            f_ce: e.loss.f_ce,
            f_lfmmi: e.loss.f_lfmmi,
            f_mse: e.loss.f_mse,
            total: e.loss.total,
            frames: e.loss.frames,
        })
        .collect();
    write_losses(&p.out.join("models").join(format!("{name}.loss.csv")), &rows)
}

fn test_manifest(p: &Pipeline, test_set: &str) -> Result<String> {
    p.test_sets()
        .into_iter()
        .find(|(n, _)| n == test_set)
        .map(|(_, m)| m)
        .ok_or_else(|| Error::Invalid(format!("unknown test set {test_set}")))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.matrix.seeds = vec![s];
    }
    let seed = cfg.matrix.seeds[0];
    let p = Pipeline::new(cfg, &cli.out);
    match cli.cmd {
        Cmd::SynthCorpus => p.synth_corpus(),
        Cmd::Augment => p.augment(),
        Cmd::Features => p.features(),
        Cmd::Pvectors => p.pvectors(),
        Cmd::Spkembed => p.spkembed(),
        Cmd::TrainGmm => p.train_gmm(),
        Cmd::Align => p.align(),
        Cmd::Graphs => p.graphs(),
        Cmd::TrainAm { condition, aux } => {
            let d = p.load()?;
            let seqs = d.train_seqs(&p.train_sets(), aux)?;
            let mut model = FdcaeModel::new(
                &p.cfg.model,
                condition,
                aux,
                aux.dim(d.embed_dim),
                d.ctx.topology.num_states(),
                d.norm.clone(),
                seed,
            );
            let tcfg = p.cfg.train.to_train_config();
            let name = model_name(condition, aux, seed);
            let rep = train(&mut model, &seqs, &d.ctx, &tcfg, seed, Some(&p.out.join("models").join(&name)))?;
            save_model(&p, &name, &model, &rep, Arm::Seed, seed)?;
            println!("{name}");
            Ok(())
        }
        Cmd::Adapt { model, arm, epochs } => {
            let d = p.load()?;
            let mut m = load_model(&p, &model)?;
            let set = p.adapt_set(arm)?;
            let seqs = d.train_seqs(&[set.to_string()], m.aux_mode())?;
            let tcfg = p.cfg.train.to_train_config();
            let rep = adapt(&mut m, &seqs, &d.ctx, &tcfg, epochs.unwrap_or(p.cfg.train.adapt_epochs), seed)?;
            let name = format!("{model}.{arm}");
            save_model(&p, &name, &m, &rep, arm, seed)?;
            println!("{name}");
            Ok(())
        }
        Cmd::Decode { model, test_set } => {
            let d = p.load()?;
            let m = load_model(&p, &model)?;
            let set = d.set(&test_manifest(&p, &test_set)?)?;
            let dir = p.out.join("hyp");
            std::fs::create_dir_all(&dir).map_err(|e| Error::Invalid(e.to_string()))?;
            let path = dir.join(format!("{model}.{test_set}.txt"));
            let mut text = String::new();
            for u in &set.utts {
                let aux = d.aux(u, m.aux_mode())?;
                let r = decode_utterance(&m, &u.utt_id, u.feats.frames.view(), aux.as_ref(), &d.den_utt, &d.ctx.topology)?;
                let syms: Vec<&str> = r.phones.iter().map(|&ph| p.inv.symbol(ph)).collect();
                text.push_str(&format!("{}\t{}\n", u.utt_id, syms.join(" ")));
            }
            std::fs::write(&path, text).map_err(|e| Error::Invalid(e.to_string()))?;
            println!("{}", path.display());
            Ok(())
        }
        Cmd::Score { hyp, test_set } => {
            let set = p.load_set(&test_manifest(&p, &test_set)?)?;
            let text = std::fs::read_to_string(&hyp).map_err(|e| Error::Invalid(format!("{}: {e}", hyp.display())))?;
            let mut hyps = std::collections::BTreeMap::new();
            for line in text.lines() {
                let (id, phones) = line.split_once('\t').unwrap_or((line, ""));
                hyps.insert(id.to_string(), p.inv.encode(&phones.split_whitespace().collect::<Vec<_>>())?);
            }
            let mut count = ErrorCount::default();
            for u in &set.utts {
                let reference: Vec<usize> = u.transcript.iter().copied().filter(|&ph| ph != SIL_PHONE).collect();
                let h = hyps
                    .get(&u.utt_id)
                    .ok_or_else(|| Error::Invalid(format!("no hypothesis for {}", u.utt_id)))?;
                count.add(h, &reference);
            }
            println!("PER {:.2}% ({} errors / {} phones)", count.per()?, count.errors, count.ref_len);
            Ok(())
        }
        Cmd::Matrix => {
            let report = run_all(&p)?;
            print!("{}", format_summary(&report));
            Ok(())
        }
        Cmd::Report => {
            let report = load_report(&p.out.join("report"))?;
            print!("{}", format_summary(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
