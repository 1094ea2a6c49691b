//! Command-line frontend for the mixed-noise denoiser: noise synthesis,
//! impulse detection, restoration, evaluation, and a reproducible
//! benchmark harness over PGM images.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use mixdenoise_core::detect::{acwmf_detect, amf_detect};
use mixdenoise_core::image::{load_pgm, mse, psnr, save_pgm, Image};
use mixdenoise_core::noise::{corrupt, ImpulseKind, NoiseSpec};
use mixdenoise_core::solver::{denoise_traced, DEFAULT_WMAX};
use mixdenoise_core::{Params, PixelMask};

#[derive(Parser)]
#[command(
    name = "mixdenoise",
    about = "Remove mixed Gaussian-plus-impulse noise from grayscale PGM images",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade a clean image with Gaussian plus impulse noise.
    Corrupt(CorruptArgs),
    /// Detect impulse-suspect pixels and write a mask image.
    Detect(DetectArgs),
    /// Restore an image degraded by mixed noise.
    Denoise(DenoiseArgs),
    /// Print MSE and PSNR between a reference and a test image.
    Evaluate(EvaluateArgs),
    /// Run a suite of corrupt/denoise/evaluate cases and emit a CSV report.
    Benchmark(BenchmarkArgs),
}

fn parse_kind(s: &str) -> Result<ImpulseKind, String> {
    ImpulseKind::parse(s).map_err(|e| e.to_string())
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid rate '{s}'"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("rate {v} outside [0, 1]"))
    }
}

fn parse_sigma(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid sigma '{s}'"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("sigma {v} must be finite and nonnegative"))
    }
}

#[derive(Args)]
struct CorruptArgs {
    /// Clean input PGM.
    #[arg(long, short = 'i')]
    input: PathBuf,
    /// Noisy output PGM.
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Gaussian noise standard deviation.
    #[arg(long, value_parser = parse_sigma)]
    sigma: f64,
    /// Impulse corruption probability in [0, 1].
    #[arg(long, value_parser = parse_rate)]
    rate: f64,
    /// Impulse model: sp (salt-and-pepper) or rv (random-valued).
    #[arg(long, value_parser = parse_kind)]
    kind: ImpulseKind,
    /// Reproducibility seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth mask output (default: <output>.mask.pgm).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Metadata text output (default: <output>.meta.txt).
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, short = 'i')]
    input: PathBuf,
    /// Mask output PGM (0 = reliable, 255 = suspect).
    #[arg(long, short = 'o')]
    output: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: ImpulseKind,
    /// Adaptive-median window cap (sp detection).
    #[arg(long, default_value_t = DEFAULT_WMAX)]
    wmax: usize,
    /// Threshold scale (rv detection).
    #[arg(long, default_value_t = 1.0)]
    delta_factor: f64,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long, short = 'i')]
    input: PathBuf,
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Gaussian noise standard deviation of the degradation.
    #[arg(long, value_parser = parse_sigma)]
    sigma: f64,
    #[arg(long, value_parser = parse_kind)]
    kind: ImpulseKind,
    /// Flat `section.key = value` parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print a per-iteration objective/residual trace to stdout.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference (clean) PGM.
    #[arg(long, short = 'r')]
    reference: PathBuf,
    /// Test (degraded or restored) PGM.
    #[arg(long, short = 't')]
    test: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Case list: `image sigma rate kind seed [noisy_lo noisy_hi den_min]`
    /// per line; `#` comments allowed.
    #[arg(long, short = 's')]
    suite: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report CSV path (default: stdout).
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MIXDENOISE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            _ => {
                eprintln!("mixdenoise: ignoring invalid MIXDENOISE_THREADS='{threads}'");
            }
        }
    }

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Corrupt(args) => cmd_corrupt(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("mixdenoise: {msg}");
            ExitCode::from(1)
        }
    }
}

type CmdResult = Result<ExitCode, String>;

fn load(path: &Path) -> Result<Image, String> {
    load_pgm(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn save(img: &Image, path: &Path) -> Result<(), String> {
    save_pgm(img, path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_params(config: Option<&PathBuf>) -> Result<Params, String> {
    match config {
        None => Ok(Params::default()),
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Params::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

fn mask_to_image(mask: &PixelMask) -> Image {
    Image::from_fn(mask.width(), mask.height(), |r, c| {
        if mask.is_suspect(r, c) {
            255.0
        } else {
            0.0
        }
    })
}

fn cmd_corrupt(args: CorruptArgs) -> CmdResult {
    let clean = load(&args.input)?;
    let spec = NoiseSpec {
        sigma: args.sigma,
        rate: args.rate,
        kind: args.kind,
        seed: args.seed,
    };
    let record = corrupt(&clean, &spec).map_err(|e| e.to_string())?;
    save(&record.noisy, &args.output)?;

    let mask_path = args
        .mask
        .unwrap_or_else(|| sidecar(&args.output, "mask.pgm"));
    save(&mask_to_image(&record.truth_mask), &mask_path)?;

    let meta_path = args
        .meta
        .unwrap_or_else(|| sidecar(&args.output, "meta.txt"));
    let meta = format!(
        "input = {}\nsigma = {}\nrate = {}\nkind = {}\nseed = {}\nimpulse_pixels = {}\n",
        args.input.display(),
        spec.sigma,
        spec.rate,
        spec.kind.as_str(),
        spec.seed,
        record.truth_mask.suspect_count(),
    );
    std::fs::write(&meta_path, meta).map_err(|e| format!("{}: {e}", meta_path.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn sidecar(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_detect(args: DetectArgs) -> CmdResult {
    let img = load(&args.input)?;
    if args.wmax < 3 || args.wmax % 2 == 0 {
        return Err(format!("wmax must be odd and >= 3, got {}", args.wmax));
    }
    if args.delta_factor < 0.0 {
        return Err(format!(
            "delta factor must be nonnegative, got {}",
            args.delta_factor
        ));
    }
    let mask = match args.kind {
        ImpulseKind::SaltPepper => amf_detect(&img, args.wmax),
        ImpulseKind::RandomValued => acwmf_detect(&img, args.delta_factor),
    };
    save(&mask_to_image(&mask), &args.output)?;
    let total = mask.len();
    let suspect = mask.suspect_count();
    println!(
        "suspect {suspect} of {total} pixels ({:.2}%), reliable {}",
        100.0 * suspect as f64 / total as f64,
        mask.reliable_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_denoise(args: DenoiseArgs) -> CmdResult {
    let noisy = load(&args.input)?;
    let params = load_params(args.config.as_ref())?;
    let cfg = params.solver_config(args.sigma, args.kind);
    let started = Instant::now();
    let (restored, trace) = denoise_traced(&noisy, &cfg, args.trace).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();
    for t in &trace {
        println!(
            "outer {} inner {} objective {:.4} fidelity {:.4} local {:.4} nonlocal {} |x-u| {:.4} |x-w| {:.4}",
            t.outer,
            t.inner,
            t.objective,
            t.fidelity,
            t.local_energy,
            t.nonlocal_count,
            t.residual_u,
            t.residual_w
        );
    }
    save(&restored, &args.output)?;
    eprintln!("denoised in {elapsed:.1}s");
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    let reference = load(&args.reference)?;
    let test = load(&args.test)?;
    if !reference.same_size(&test) {
        eprintln!(
            "mixdenoise: size mismatch: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        );
        return Ok(ExitCode::from(2));
    }
    let m = mse(&reference, &test).map_err(|e| e.to_string())?;
    let p = psnr(&reference, &test).map_err(|e| e.to_string())?;
    println!("MSE: {m}");
    println!("PSNR: {p}");
    Ok(ExitCode::SUCCESS)
}

struct BenchCase {
    image: PathBuf,
    sigma: f64,
    rate: f64,
    kind: ImpulseKind,
    seed: u64,
    noisy_bounds: Option<(f64, f64)>,
    denoised_min: Option<f64>,
}

fn parse_suite(text: &str) -> Result<Vec<BenchCase>, String> {
    let mut cases = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 7 && fields.len() != 8 {
            return Err(format!(
                "suite line {}: expected 5, 7 or 8 fields, got {}",
                lineno + 1,
                fields.len()
            ));
        }
        let bad = |what: &str| format!("suite line {}: bad {what}", lineno + 1);
        let case = BenchCase {
            image: PathBuf::from(fields[0]),
            sigma: fields[1].parse().map_err(|_| bad("sigma"))?,
            rate: fields[2].parse().map_err(|_| bad("rate"))?,
            kind: ImpulseKind::parse(fields[3]).map_err(|e| e.to_string())?,
            seed: fields[4].parse().map_err(|_| bad("seed"))?,
            noisy_bounds: if fields.len() >= 7 {
                Some((
                    fields[5].parse().map_err(|_| bad("noisy bound"))?,
                    fields[6].parse().map_err(|_| bad("noisy bound"))?,
                ))
            } else {
                None
            },
            denoised_min: if fields.len() == 8 {
                Some(fields[7].parse().map_err(|_| bad("denoised bound"))?)
            } else {
                None
            },
        };
        if !(0.0..=1.0).contains(&case.rate) {
            return Err(format!("suite line {}: rate outside [0, 1]", lineno + 1));
        }
        cases.push(case);
    }
    Ok(cases)
}

fn run_case(case: &BenchCase, params: &Params) -> Result<(f64, f64, f64), String> {
    let clean = load(&case.image)?;
    let spec = NoiseSpec {
        sigma: case.sigma,
        rate: case.rate,
        kind: case.kind,
        seed: case.seed,
    };
    let record = corrupt(&clean, &spec).map_err(|e| e.to_string())?;
    let noisy_psnr = psnr(&clean, &record.noisy).map_err(|e| e.to_string())?;
    let cfg = params.solver_config(case.sigma, case.kind);
    let started = Instant::now();
    let restored = mixdenoise_core::denoise(&record.noisy, &cfg).map_err(|e| e.to_string())?;
    let runtime = started.elapsed().as_secs_f64();
    let denoised_psnr = psnr(&clean, &restored).map_err(|e| e.to_string())?;
    Ok((noisy_psnr, denoised_psnr, runtime))
}

fn cmd_benchmark(args: BenchmarkArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.suite)
        .map_err(|e| format!("{}: {e}", args.suite.display()))?;
    let cases = parse_suite(&text)?;
    let params = load_params(args.config.as_ref())?;

    let mut report = String::new();
    writeln!(report, "# mixdenoise benchmark report").unwrap();
    for line in params.render().lines() {
        writeln!(report, "# {line}").unwrap();
    }
    writeln!(report, "image,kind,r,noisy_psnr,denoised_psnr,runtime_s,status").unwrap();

    let mut any_failed = false;
    for case in &cases {
        let name = case
            .image
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| case.image.display().to_string());
        match run_case(case, &params) {
            Ok((noisy_psnr, denoised_psnr, runtime)) => {
                let mut status = "pass";
                if let Some((lo, hi)) = case.noisy_bounds {
                    if noisy_psnr < lo || noisy_psnr > hi {
                        status = "fail";
                    }
                }
                if let Some(min) = case.denoised_min {
                    if denoised_psnr < min {
                        status = "fail";
                    }
                }
                if status == "fail" {
                    any_failed = true;
                }
                writeln!(
                    report,
                    "{name},{},{:.2},{noisy_psnr:.2},{denoised_psnr:.2},{runtime:.1},{status}",
                    case.kind.as_str(),
                    case.rate
                )
                .unwrap();
            }
            Err(msg) => {
                any_failed = true;
                writeln!(
                    report,
                    "{name},{},{:.2},,,,error: {}",
                    case.kind.as_str(),
                    case.rate,
                    msg.replace(',', ";")
                )
                .unwrap();
            }
        }
    }

    match &args.output {
        Some(path) => {
            std::fs::write(path, &report).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => print!("{report}"),
    }
    Ok(if any_failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}
