use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tensorview::accounting::{
    compression_rate, parse_descriptor, ModelDescriptor, Scheme, SHIFTRESNET20, VGG16_CIFAR,
};
use tensorview::convref::{conv2d, forward, FeatureMap};
use tensorview::prune::{prune as prune_module, PruneSpec, Rational, Strategy};
use tensorview::store::{read_factors, read_module, write_factors, write_module};
use tensorview::{
    cpd_als, dp_decompose, kt31, pd_decompose, shift_extract, AlsOptions, Error, Factors,
};

use crate::error::{CliError, CliResult};
use crate::{DecomposeScheme, ReportScheme, StrategyArg};

pub struct DecomposeArgs {
    pub scheme: DecomposeScheme,
    pub rank: Option<usize>,
    pub input: PathBuf,
    pub out: PathBuf,
    pub als: AlsOptions,
}

fn required_rank(rank: Option<usize>, scheme: &str) -> CliResult<usize> {
    match rank {
        Some(r) if r >= 1 => Ok(r),
        Some(r) => Err(CliError::Usage(format!(
            "--rank must be at least 1 for {scheme}, got {r}"
        ))),
        None => Err(CliError::Usage(format!("--rank is required for {scheme}"))),
    }
}

fn dims_string(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn decompose(out: &mut impl Write, args: DecomposeArgs) -> CliResult<()> {
    let rank = match args.scheme {
        DecomposeScheme::Pdp => Some(required_rank(args.rank, "pdp")?),
        DecomposeScheme::Shift => Some(required_rank(args.rank, "shift")?),
        DecomposeScheme::Dp | DecomposeScheme::Pd => None,
    };
    let kernel = kt31::read(&args.input)?;
    let g = kernel.reshape_4to3()?;
    let factors = match (args.scheme, rank) {
        (DecomposeScheme::Dp, _) => Factors::Dp(dp_decompose(&g)?),
        (DecomposeScheme::Pd, _) => Factors::Pd(pd_decompose(&g)?),
        (DecomposeScheme::Pdp, Some(r)) => Factors::Cpd(cpd_als(&g, r, &args.als)?.factors),
        (DecomposeScheme::Shift, Some(r)) => Factors::Shift(shift_extract(&g, r)?),
        _ => unreachable!("rank checked above"),
    };

    // Reload so the error and the stored reference reflect float32 factors.
    write_factors(&args.out, &factors, None)?;
    let stored = read_factors(&args.out)?.factors;
    let recon = stored.reconstruct()?;
    write_factors(&args.out, &stored, Some(&recon.reshape_3to4()?))?;

    let norm = g.frobenius_norm();
    let abs = g.distance(&recon)?;
    let rel_error = if norm > 0.0 { abs / norm } else { abs };
    let baseline = g.len();
    let params = stored.param_count();
    writeln!(out, "scheme={}", stored.scheme())?;
    writeln!(out, "dims={}", dims_string(kernel.dims()))?;
    if let Some(r) = stored.rank() {
        writeln!(out, "rank={r}")?;
    }
    writeln!(out, "params={params}")?;
    writeln!(out, "baseline={baseline}")?;
    writeln!(
        out,
        "cr={:.2}",
        100.0 * (1.0 - params as f64 / baseline as f64)
    )?;
    writeln!(out, "rel_error={rel_error:e}")?;
    writeln!(out, "out={}", args.out.display())?;
    Ok(())
}

pub fn verify(
    out: &mut impl Write,
    factors: &Path,
    input: &Path,
    stride: usize,
    tolerance: f64,
) -> CliResult<()> {
    if stride == 0 {
        return Err(CliError::Usage("--stride must be at least 1".into()));
    }
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(CliError::Usage(format!(
            "--tolerance must be non-negative, got {tolerance}"
        )));
    }
    let stored = read_factors(factors)?;
    let x = FeatureMap::from_tensor(kt31::read(input)?)?;
    let kernel = match stored.reference {
        Some(k) => k,
        None => stored.factors.reconstruct()?.reshape_3to4()?,
    };
    let got = forward(&x, &stored.factors, stride)?;
    let want = conv2d(&x, &kernel, stride)?;
    let deviation = got.relative_deviation(&want)?;
    let pass = deviation <= tolerance;
    writeln!(out, "scheme={}", stored.factors.scheme())?;
    writeln!(out, "stride={stride}")?;
    writeln!(out, "deviation={deviation:e}")?;
    writeln!(out, "tolerance={tolerance:e}")?;
    writeln!(out, "status={}", if pass { "pass" } else { "fail" })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Tolerance {
            deviation,
            tolerance,
        })
    }
}

pub fn prune(
    out: &mut impl Write,
    module_dir: &Path,
    phi: Rational,
    strategy: StrategyArg,
    out_dir: &Path,
    report_path: Option<&Path>,
) -> CliResult<()> {
    let strategy = match strategy {
        StrategyArg::Even => Strategy::Even,
        StrategyArg::Uneven => Strategy::Uneven,
    };
    let spec = PruneSpec::new(phi, strategy)?;
    let module = read_module(module_dir)?;
    let (pruned, report) = prune_module(&module, &spec)?;
    write_module(out_dir, &pruned)?;
    if let Some(path) = report_path {
        fs::write(path, report.to_text()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    let (before, after) = (module.param_count(), pruned.param_count());
    writeln!(out, "strategy={}", strategy.name())?;
    writeln!(out, "phi={phi}")?;
    writeln!(out, "m={} m_new={}", module.channels(), pruned.channels())?;
    writeln!(out, "params={before} params_new={after}")?;
    writeln!(
        out,
        "cr={:.2}",
        100.0 * (1.0 - after as f64 / before as f64)
    )?;
    writeln!(
        out,
        "energy={}",
        tensorview::prune::retained_energy(&report)
    )?;
    Ok(())
}

fn load_model(model: &str) -> CliResult<ModelDescriptor> {
    let text = match model {
        "builtin:vgg16" => VGG16_CIFAR.to_string(),
        "builtin:shiftresnet20" => SHIFTRESNET20.to_string(),
        path => fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?,
    };
    Ok(parse_descriptor(&text)?)
}

pub fn report(
    out: &mut impl Write,
    model: &str,
    scheme: Option<ReportScheme>,
    rank: Option<usize>,
    phi: Option<Rational>,
) -> CliResult<()> {
    let descriptor = load_model(model)?;
    let scheme = match (scheme, phi) {
        (Some(s), _) => s,
        (None, Some(_)) => ReportScheme::Pruned,
        (None, None) => ReportScheme::Baseline,
    };
    let scheme = match scheme {
        ReportScheme::Baseline => Scheme::Baseline,
        ReportScheme::Dp => Scheme::Dp,
        ReportScheme::Pd => Scheme::Pd,
        ReportScheme::Pdp => Scheme::Pdp(required_rank(rank, "pdp")?),
        ReportScheme::Shift => Scheme::Shift(required_rank(rank, "shift")?),
        ReportScheme::Pruned => {
            let phi = phi.ok_or_else(|| CliError::Usage("--phi is required for pruned".into()))?;
            PruneSpec::new(phi, Strategy::Even)?;
            Scheme::Pruned(phi)
        }
    };
    let c = compression_rate(&descriptor, scheme)?;
    writeln!(out, "scheme={scheme}")?;
    for layer in &c.layers {
        writeln!(
            out,
            "layer={} baseline={} params={}",
            layer.name, layer.baseline, layer.params
        )?;
    }
    writeln!(out, "total_baseline={}", c.original)?;
    writeln!(out, "total_params={}", c.compressed)?;
    writeln!(out, "aux={}", c.aux)?;
    writeln!(out, "cr={:.2}", c.cr_percent)?;
    Ok(())
}
