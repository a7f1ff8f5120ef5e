//! Data-plane subcommands: fit-params, embed, rf.

use std::path::{Path, PathBuf};

use clap::Args;
use ndarray::Array2;

use chi2map::chebyshev::cheb_embed_matrix;
use chi2map::chi2direct::{embed_matrix, fit_params, ParamVector};
use chi2map::histio::{read_matrix_raw, write_matrix};
use chi2map::rfmap::{rf_transform, sample_basis, write_basis};
use chi2map::{Chi2Error, Result};

use crate::util::{load_matrix, read_real_csv, resolve_format, write_real_csv, FormatArg};

#[derive(Args)]
pub struct FitParamsArgs {
    /// Input histogram matrix.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// Number of series parameters to fit.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Log-spaced histogram bins for the value distribution.
    #[arg(long, default_value_t = 1000)]
    pub bins: usize,
    /// Warn when rows do not sum to 1.
    #[arg(long)]
    pub strict_l1: bool,
    /// Output: one fitted parameter per line (CSV column).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn fit_params_cmd(args: FitParamsArgs) -> Result<()> {
    let x = load_matrix(&args.input, args.format, args.strict_l1)?;
    let k = fit_params(&x, args.n, args.bins)?;
    let column = Array2::from_shape_vec((k.len(), 1), k.values().to_vec()).expect("column");
    write_real_csv(&args.out, &column)
}

pub fn load_params(path: &Path) -> Result<ParamVector> {
    let column = read_real_csv(path)?;
    if column.ncols() != 1 {
        return Err(Chi2Error::Parameter(format!(
            "parameter file {} must have one column, found {}",
            path.display(),
            column.ncols()
        )));
    }
    ParamVector::new(column.column(0).to_vec())
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// `direct` (needs --params) or `chebyshev` (needs --terms).
    #[arg(long)]
    pub method: String,
    /// Fitted parameter CSV for the direct method.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Series terms for the Chebyshev method.
    #[arg(long)]
    pub terms: Option<usize>,
    #[arg(long)]
    pub strict_l1: bool,
    /// Output matrix; `.bin` extension selects the binary format.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub out_format: FormatArg,
}

pub fn embed_cmd(args: EmbedArgs) -> Result<()> {
    let x = load_matrix(&args.input, args.format, args.strict_l1)?;
    let embedded = match args.method.as_str() {
        "direct" => {
            let params = args.params.as_deref().ok_or_else(|| {
                Chi2Error::Parameter("--method direct requires --params".into())
            })?;
            embed_matrix(&x, &load_params(params)?)
        }
        "chebyshev" => {
            let terms = args.terms.ok_or_else(|| {
                Chi2Error::Parameter("--method chebyshev requires --terms".into())
            })?;
            cheb_embed_matrix(&x, terms)
        }
        other => {
            return Err(Chi2Error::Parameter(format!("unknown method `{other}`")));
        }
    };
    write_matrix(&args.out, &embedded, resolve_format(args.out_format, &args.out))
}

#[derive(Args)]
pub struct RfArgs {
    /// Embedded matrix to lift (output of `embed`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// Output feature dimension D.
    #[arg(long)]
    pub dims: usize,
    /// Gaussian frequency variance is 2*gamma; the lifted Gram approximates
    /// exp(-2*gamma * chi2-distance).
    #[arg(long, default_value_t = 0.75)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the sampled basis for reuse.
    #[arg(long)]
    pub basis_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub out_format: FormatArg,
}

pub fn rf_cmd(args: RfArgs) -> Result<()> {
    let embedded = read_matrix_raw(&args.input, resolve_format(args.format, &args.input))?;
    let basis = sample_basis(embedded.ncols(), args.dims, args.gamma, args.seed)?;
    let z = rf_transform(&embedded, &basis)?;
    if let Some(basis_path) = &args.basis_out {
        write_basis(basis_path, &basis)?;
    }
    write_matrix(&args.out, &z, resolve_format(args.out_format, &args.out))
}
