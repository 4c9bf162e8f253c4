//! `lattice-puf`: batch driver for provisioning, sessions, statistics,
//! attacks and CRP export.
//!
//! Output files default to `$LATTICE_PUF_OUT` (or the current directory).
//! On failure a single `error kind=<Kind> message=<text>` line goes to
//! stderr and the exit status is nonzero.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lattice_puf::attacks::{active_attack, counter_replay_hd, AttackReport};
use lattice_puf::crp_io::{self, ChallengeSource, RecordForm};
use lattice_puf::device::Device;
use lattice_puf::ecc::{FeConfig, FeRow};
use lattice_puf::lwe::{decryption_error_rate, LweParams};
use lattice_puf::server::{verify, SeedWidth, Server, DEFAULT_TAU};
use lattice_puf::stats::{
    eval_reliability, eval_uniformity, eval_uniqueness, MetricSummary, Population, ReliabilityConfig, ReliabilityMode,
};
use lattice_puf::zq::RngHandle;

const OUT_ENV: &str = "LATTICE_PUF_OUT";

#[derive(Parser)]
#[command(name = "lattice-puf", version, about = "Lattice PUF behavioral model")]
struct Cli {
    /// Directory for default output paths [env: LATTICE_PUF_OUT]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    #[arg(long, default_value_t = 160)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    q: u32,
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, default_value_t = 0.022)]
    alpha: f64,
    /// Fuzzy-extractor row, named by its design raw BER in percent
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(1..=15))]
    fe_row: u8,
    /// Raw POK bit-error rate; defaults to the FE row's design BER
    #[arg(long)]
    ber: Option<f64>,
    /// External seed width in bits (128 mixes in the counter)
    #[arg(long, default_value_t = 128)]
    seed_bits: usize,
}

impl ParamArgs {
    fn lwe(&self) -> anyhow::Result<LweParams> {
        Ok(LweParams::new(self.n, self.q, self.m, self.alpha)?)
    }

    fn fe(&self) -> anyhow::Result<(FeConfig, f64)> {
        let row = FeRow::from_id(self.fe_row)?;
        Ok((FeConfig::for_row(row), self.ber.unwrap_or(row.raw_ber())))
    }

    fn width(&self) -> anyhow::Result<SeedWidth> {
        Ok(SeedWidth::from_bits(self.seed_bits)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Uniformity,
    Uniqueness,
    Reliability,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Uniformity => "uniformity",
            Metric::Uniqueness => "uniqueness",
            Metric::Reliability => "reliability",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    Plaintext,
    Expected,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackMode {
    Raw,
    Counter,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Compact,
    Expanded,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Prng,
    Ciphertext,
}

#[derive(Subcommand)]
enum Command {
    /// Manufacture a device; writes `<id>.device` and a one-record `<id>.enroll`
    Provision {
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Merge `.enroll` records into the server registry
    Enroll {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Power up a device, run one authentication session, update both sides
    Session {
        #[arg(long)]
        id: String,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        device: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        t: usize,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the compact challenge to this file
        #[arg(long)]
        session_out: Option<PathBuf>,
    },
    /// Population statistics as summary and histogram CSV files
    EvalStats {
        #[arg(long, value_enum)]
        metric: Metric,
        /// Defaults to 100, or 1000 with --paper-scale
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        challenges: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// 1000 instances and the tighter acceptance band
        #[arg(long)]
        paper_scale: bool,
        /// Exit nonzero unless the result lies in the acceptance band
        #[arg(long)]
        assert: bool,
        #[arg(long, value_enum, default_value = "plaintext")]
        reference: Reference,
        /// Count a failed key reconstruction as an all-wrong session
        #[arg(long)]
        fold_fe_failures: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Active secret extraction against a freshly provisioned device
    Attack {
        #[arg(long, value_enum, default_value = "counter")]
        mode: AttackMode,
        /// Expose raw (a, b) decryption; required for --mode raw
        #[arg(long)]
        unsafe_raw_oracle: bool,
        /// Maximum equations collected before giving up
        #[arg(long)]
        row_budget: Option<usize>,
        /// Counter-shifted replay trials reported alongside the counter mode
        #[arg(long, default_value_t = 100)]
        replays: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Write a CRP dataset from an enrolled device
    Export {
        #[arg(long)]
        id: String,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        device: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value = "compact")]
        form: Form,
        #[arg(long, value_enum, default_value = "prng")]
        source: Source,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Defaults to `<out-dir>/<id>.crp`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic per-bit decryption error rate
    ErrorModel {
        #[arg(long, default_value_t = 0.022)]
        alpha: f64,
        #[arg(long, default_value_t = 256)]
        m: usize,
    },
}

/// A result outside the band checked by `--assert`, or a rejected session.
#[derive(Debug)]
struct Threshold(String);

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Threshold {}

fn out_dir(cli: &Option<PathBuf>) -> PathBuf {
    cli.clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn load_device(path: &Path) -> anyhow::Result<Device> {
    crp_io::read_device(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_registry(path: &Path) -> anyhow::Result<Server> {
    crp_io::read_registry(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn save_device(device: &Device, path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    crp_io::write_device(device, &mut w)?;
    Ok(w.flush()?)
}

fn save_registry(server: &Server, path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    crp_io::write_registry(server, &mut w)?;
    Ok(w.flush()?)
}

fn provision(dir: &Path, id: &str, seed: u64, params: &ParamArgs) -> anyhow::Result<()> {
    let lwe = params.lwe()?;
    let (fe, ber) = params.fe()?;
    let mut rng = RngHandle::from_seed(seed);
    let (device, sk) = Device::provision(lwe, fe, ber, &mut rng)?;
    let mut escrow = Server::new(lwe, params.width()?);
    escrow.enroll(id, sk, device.counter(), &mut rng)?;

    let device_path = dir.join(format!("{id}.device"));
    let enroll_path = dir.join(format!("{id}.enroll"));
    save_device(&device, &device_path)?;
    save_registry(&escrow, &enroll_path)?;
    println!(
        "provisioned {id}: {} and {}",
        device_path.display(),
        enroll_path.display()
    );
    Ok(())
}

fn enroll(dir: &Path, registry: Option<PathBuf>, records: &[PathBuf]) -> anyhow::Result<()> {
    let path = registry.unwrap_or_else(|| dir.join("registry.tsv"));
    let mut server = if path.exists() {
        Some(load_registry(&path)?)
    } else {
        None
    };
    for file in records {
        let batch = load_registry(file)?;
        let server = server.get_or_insert_with(|| Server::new(*batch.params(), batch.seed_width()));
        if batch.params() != server.params() || batch.seed_width() != server.seed_width() {
            bail!(lattice_puf::Error::InvalidParams(format!(
                "{} does not match the registry parameters",
                file.display()
            )));
        }
        for rec in batch.records() {
            server.insert(rec.clone())?;
            println!("enrolled {}", rec.id());
        }
    }
    let server = server.expect("at least one record file");
    save_registry(&server, &path)?;
    println!("registry {}: {} devices", path.display(), server.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn session(
    dir: &Path,
    id: &str,
    registry: Option<PathBuf>,
    device: Option<PathBuf>,
    t: usize,
    tau: f64,
    seed: u64,
    session_out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let registry = registry.unwrap_or_else(|| dir.join("registry.tsv"));
    let device_path = device.unwrap_or_else(|| dir.join(format!("{id}.device")));
    let mut server = load_registry(&registry)?;
    let mut dev = load_device(&device_path)?;
    let counter = server.record(id)?.expected_counter();
    let mut rng = RngHandle::derive(seed, counter as u64);

    dev.power_up(&mut rng)?;
    let s = server.gen_session(id, t, &mut rng)?;
    if let Some(path) = session_out {
        let mut w = create(&path)?;
        crp_io::write_session(&s.challenge, server.params().modulus(), &mut w)?;
        w.flush()?;
    }
    let r = dev.respond(&s.challenge)?;
    let v = verify(&s.expected, &r.bits, tau)?;
    dev.power_down();
    save_device(&dev, &device_path)?;
    save_registry(&server, &registry)?;

    println!(
        "session {id}: t={t} counter={} hd={:.4} tau={tau} accept={}",
        r.counter_used, v.hd_fraction, v.accept
    );
    if !v.accept {
        bail!(Threshold(format!(
            "session rejected: hd {:.4} > tau {tau}",
            v.hd_fraction
        )));
    }
    Ok(())
}

/// Returns a failure description when `summary` lies outside the band.
fn check_band(metric: Metric, summary: &MetricSummary, paper_scale: bool) -> Option<String> {
    match metric {
        Metric::Uniformity | Metric::Uniqueness => {
            let tol = if paper_scale { 0.005 } else { 0.01 };
            if (summary.mean - 0.5).abs() > tol {
                return Some(format!("mean {:.5} outside 0.5 +- {tol}", summary.mean));
            }
            if paper_scale && (summary.std - 0.0158).abs() > 0.005 {
                return Some(format!("std {:.5} outside 0.0158 +- 0.005", summary.std));
            }
            None
        }
        Metric::Reliability => (!(0.010..=0.016).contains(&summary.mean))
            .then(|| format!("mean {:.5} outside [0.010, 0.016]", summary.mean)),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval_stats(
    dir: &Path,
    metric: Metric,
    instances: Option<usize>,
    challenges: usize,
    seed: u64,
    paper_scale: bool,
    assert: bool,
    reference: Reference,
    fold_fe_failures: bool,
    params: &ParamArgs,
) -> anyhow::Result<()> {
    let count = instances.unwrap_or(if paper_scale { 1000 } else { 100 });
    let (fe, ber) = params.fe()?;
    let pop = Population::manufacture(count, params.lwe()?, &fe, ber, params.width()?, seed)?;
    let summary = match metric {
        Metric::Uniformity => eval_uniformity(&pop, challenges, seed)?,
        Metric::Uniqueness => eval_uniqueness(&pop, challenges, seed)?,
        Metric::Reliability => {
            let cfg = ReliabilityConfig {
                challenges,
                mode: match reference {
                    Reference::Plaintext => ReliabilityMode::Plaintext,
                    Reference::Expected => ReliabilityMode::Expected,
                },
                fold_fe_failures,
                ..ReliabilityConfig::default()
            };
            eval_reliability(&pop, &cfg, seed)?
        }
    };

    let name = metric.name();
    let summary_path = dir.join(format!("{name}_summary.csv"));
    let histogram_path = dir.join(format!("{name}_histogram.csv"));
    let mut w = create(&summary_path)?;
    w.write_all(summary.summary_csv(name).as_bytes())?;
    w.flush()?;
    let mut w = create(&histogram_path)?;
    w.write_all(summary.histogram_csv().as_bytes())?;
    w.flush()?;

    println!(
        "{name}: instances={count} challenges={challenges} mean={:.5} std={:.5} se={:.6}",
        summary.mean,
        summary.std,
        summary.std_error()
    );
    println!("wrote {} and {}", summary_path.display(), histogram_path.display());
    if assert {
        if let Some(why) = check_band(metric, &summary, paper_scale) {
            bail!(Threshold(format!("{name} {why}")));
        }
        println!("{name}: within acceptance band");
    }
    Ok(())
}

fn print_attack(report: &AttackReport, recovered: bool) {
    println!(
        "attack mode=raw queries={} rows={} recovered={recovered}",
        report.queries, report.rows
    );
}

fn attack(
    mode: AttackMode,
    unsafe_raw_oracle: bool,
    row_budget: Option<usize>,
    replays: usize,
    seed: u64,
    params: &ParamArgs,
) -> anyhow::Result<()> {
    if mode == AttackMode::Raw && !unsafe_raw_oracle {
        bail!(lattice_puf::Error::InvalidParams(
            "--mode raw requires --unsafe-raw-oracle".into()
        ));
    }
    let lwe = params.lwe()?;
    let (fe, ber) = params.fe()?;
    let mut rng = RngHandle::from_seed(seed);
    let (mut dev, sk) = Device::provision(lwe, fe, ber, &mut rng)?;
    dev.power_up(&mut rng)?;
    let budget = row_budget.unwrap_or(lwe.n() + lwe.n() / 4);

    if mode == AttackMode::Raw {
        dev.enable_unsafe_raw_oracle();
        let report = active_attack(&mut dev, &lwe, budget, &mut rng)?;
        let recovered = report.secret == sk.as_slice();
        print_attack(&report, recovered);
        if !recovered {
            bail!(Threshold("solver returned a wrong secret".into()));
        }
        return Ok(());
    }

    let mut server = Server::new(lwe, params.width()?);
    server.enroll("target", sk, dev.counter(), &mut rng)?;
    let mut hd = 0.0;
    for _ in 0..replays {
        let s = server.gen_session("target", 100, &mut rng)?;
        hd += counter_replay_hd(&mut dev, &s.challenge)?;
        server.resync("target", dev.counter())?;
    }
    if replays > 0 {
        println!(
            "counter-shifted replay: trials={replays} mean_hd={:.4}",
            hd / replays as f64
        );
    }
    match active_attack(&mut dev, &lwe, budget, &mut rng) {
        Err(e @ lattice_puf::Error::AttackBlocked) => {
            println!("attack mode=counter result=AttackBlocked queries=0");
            Err(e.into())
        }
        Err(e) => Err(e.into()),
        Ok(_) => bail!(Threshold("counter-mode device accepted chosen ciphertexts".into())),
    }
}

#[allow(clippy::too_many_arguments)]
fn export(
    dir: &Path,
    id: &str,
    registry: Option<PathBuf>,
    device: Option<PathBuf>,
    count: usize,
    form: Form,
    source: Source,
    seed: u64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let registry = registry.unwrap_or_else(|| dir.join("registry.tsv"));
    let device_path = device.unwrap_or_else(|| dir.join(format!("{id}.device")));
    let out = out.unwrap_or_else(|| dir.join(format!("{id}.crp")));
    let mut server = load_registry(&registry)?;
    let mut dev = load_device(&device_path)?;
    let mut rng = RngHandle::from_seed(seed);
    dev.power_up(&mut rng)?;

    let form = match form {
        Form::Compact => RecordForm::Compact,
        Form::Expanded => RecordForm::Expanded,
    };
    let source = match source {
        Source::Prng => ChallengeSource::Prng,
        Source::Ciphertext => ChallengeSource::Ciphertext,
    };
    let mut w = create(&out)?;
    let manifest = crp_io::export_crps(&mut server, id, &mut dev, count, form, source, seed, &mut w)?;
    w.flush()?;
    dev.power_down();
    save_device(&dev, &device_path)?;
    save_registry(&server, &registry)?;
    println!(
        "exported {} records to {} (sha256 {})",
        manifest.count,
        out.display(),
        manifest.sha256
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let dir = out_dir(&cli.out_dir);
    match cli.command {
        Command::Provision { id, seed, params } => provision(&dir, &id, seed, &params),
        Command::Enroll { registry, records } => enroll(&dir, registry, &records),
        Command::Session {
            id,
            registry,
            device,
            t,
            tau,
            seed,
            session_out,
        } => session(&dir, &id, registry, device, t, tau, seed, session_out),
        Command::EvalStats {
            metric,
            instances,
            challenges,
            seed,
            paper_scale,
            assert,
            reference,
            fold_fe_failures,
            params,
        } => eval_stats(
            &dir,
            metric,
            instances,
            challenges,
            seed,
            paper_scale,
            assert,
            reference,
            fold_fe_failures,
            &params,
        ),
        Command::Attack {
            mode,
            unsafe_raw_oracle,
            row_budget,
            replays,
            seed,
            params,
        } => attack(mode, unsafe_raw_oracle, row_budget, replays, seed, &params),
        Command::Export {
            id,
            registry,
            device,
            count,
            form,
            source,
            seed,
            out,
        } => export(&dir, &id, registry, device, count, form, source, seed, out),
        Command::ErrorModel { alpha, m } => {
            if !(alpha >= 0.0 && m > 0) {
                bail!(lattice_puf::Error::InvalidParams(format!("alpha={alpha} m={m}")));
            }
            let p = decryption_error_rate(alpha, m);
            println!("decryption error rate: {p:.4}");
            println!("alpha={alpha} m={m} exact={p:.6e}");
            Ok(())
        }
    }
}

/// The variant name of a library error, `Threshold`, or `Io`/`Other`.
fn error_kind(err: &anyhow::Error) -> String {
    if let Some(e) = err.downcast_ref::<lattice_puf::Error>() {
        let debug = format!("{e:?}");
        return debug
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or("Library")
            .to_string();
    }
    if err.downcast_ref::<Threshold>().is_some() {
        return "Threshold".into();
    }
    if err.chain().any(|c| c.is::<std::io::Error>()) {
        return "Io".into();
    }
    "Other".into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error kind={} message={message:?}", error_kind(&err));
            ExitCode::FAILURE
        }
    }
}
