use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use netanomaly::anomography::{anomography_pipeline, AlarmRule, Solver, Transform};
use netanomaly::data::{bin_traffic, links_to_matrix, Binning, SeriesKey, Volume};
use netanomaly::data::io::{
    parse_link_records, parse_routing_matrix, read_flow_records, write_alarms, write_flow_records, write_link_records,
    write_routing_matrix, LinkRecord,
};
use netanomaly::distpca::{simulate, DeltaPolicy};
use netanomaly::extraction::{extract_pipeline, ExtractConfig, KlConfig};
use netanomaly::gamma::{gamma_pipeline, KeySelector, MultiResConfig, Reference};
use netanomaly::hhh::{detect_hhh, hhh1d, hhh2d, HhhConfig, MissRule, PairMiss};
use netanomaly::kalman::{detect, kalman_filter, mean_shift_benchmark, roc_curve, Method, StateSpaceModel};
use netanomaly::pca::{
    entropy_tensor, fit_normalized, greedy_identify, multiway_recast, q_threshold, split_subspace, AnomalyDirection,
    PcaModel,
};
use netanomaly::sketch::{
    change_detect, defeat_pipeline, format_key, hash_key, one_step_forecasts, DefeatConfig, ForecastModel, KarySketch,
};
use netanomaly::statdetect::{astute_series, glr_series, GlrConfig};
use netanomaly::synth::{self, Anomaly, TrafficConfig};
use netanomaly::wavelet::{wavelet_detect, FilterBank, VariabilityConfig};
use netanomaly::{Alarm, Error, Feature, FlowRecord, TrafficMatrix};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for data and contract errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "netanomaly", version, about = "Non-signature network traffic anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for hash functions and synthetic traffic
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write output to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// INI file of `key = value` defaults; command-line flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct FlowInput {
    /// Flow CSV (`t,sip,dip,sp,dp,proto,packets,bytes`); read from stdin when omitted
    #[arg(long)]
    pub flows: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct MatrixInput {
    /// Link-load CSV (`t,link_id,bytes`); one column per link
    #[arg(long, conflicts_with = "flows")]
    pub links: Option<PathBuf>,
    /// Flow CSV; read from stdin when neither --links nor --flows is given
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Column series for flow input: srcdst, five-tuple, total, or a feature (sip, dip, sp, dp, proto)
    #[arg(long, default_value = "srcdst")]
    pub series: String,
    /// Time bin width in seconds
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Aggregate packets instead of bytes
    #[arg(long)]
    pub packets: bool,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// PCA subspace method on a volume matrix with Q-statistic alarms
    Pca(PcaArgs),
    /// Subspace method on multiway feature-entropy matrices
    EntropyPca(EntropyPcaArgs),
    /// Distributed sketch-subspace detection over several routers
    Defeat(DefeatArgs),
    /// ASTUTE equilibrium test between consecutive bins
    Astute(AstuteArgs),
    /// Simulate distributed PCA monitors against a centralized detector
    DistpcaSim(DistpcaArgs),
    /// k-ary sketch forecasting and change detection
    SketchChange(SketchArgs),
    /// Gamma-law multi-resolution detection over hashed sub-traces
    Gamma(GammaArgs),
    /// Hierarchical heavy hitters over address prefixes
    Hhh(HhhArgs),
    /// Wavelet band split and local variability peaks
    Wavelet(WaveletArgs),
    /// Kalman residual detectors
    Kalman(KalmanArgs),
    /// AR-model GLR change detection
    Statglr(StatGlrArgs),
    /// Infer anomalous OD flows from link loads
    Anomography(AnomographyArgs),
    /// KL histogram-clone detection and item-set extraction
    Extract(ExtractArgs),
    /// ROC curve from scored labels or the mean-shift benchmark
    Roc(RocArgs),
    /// Synthetic flow or link traffic with injectable anomalies
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    #[command(flatten)]
    pub input: MatrixInput,
    /// Q-statistic false-alarm rate
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    /// Projection threshold (in standard deviations) for the normal/residual split
    #[arg(long, default_value_t = 3.0)]
    pub sigma_mult: f64,
    /// Fixed normal-subspace dimension; chosen by the projection scan when omitted
    #[arg(long)]
    pub k: Option<usize>,
    /// Scale columns to unit variance as well as centring them
    #[arg(long)]
    pub unit_variance: bool,
    /// Routing matrix (`m n` then rows) whose columns are the candidate anomaly directions
    #[arg(long)]
    pub routing: Option<PathBuf>,
    /// Maximum flows identified per alarm
    #[arg(long, default_value_t = 3)]
    pub max_identify: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AddrKey {
    Sip,
    Dip,
}

impl AddrKey {
    fn of(self, r: &FlowRecord) -> u32 {
        match self {
            AddrKey::Sip => r.sip,
            AddrKey::Dip => r.dip,
        }
    }
}

#[derive(Args, Debug)]
pub struct EntropyPcaArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// Time bin width in seconds
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Flows are address prefixes of this length
    #[arg(long, default_value_t = 18)]
    pub prefix_len: u32,
    /// Address that defines a flow
    #[arg(long, value_enum, default_value_t = AddrKey::Sip)]
    pub group: AddrKey,
    /// Q-statistic false-alarm rate
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    /// Projection threshold for the normal/residual split
    #[arg(long, default_value_t = 3.0)]
    pub sigma_mult: f64,
    /// Fixed normal-subspace dimension
    #[arg(long)]
    pub k: Option<usize>,
    /// Maximum entropy series identified per alarm
    #[arg(long, default_value_t = 3)]
    pub max_identify: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DefeatArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// Routers the trace is split across (by source prefix)
    #[arg(long, default_value_t = 3)]
    pub routers: usize,
    /// Hash functions
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Buckets per sketch
    #[arg(long, default_value_t = 16)]
    pub s: usize,
    /// Votes needed to declare an anomaly
    #[arg(long, default_value_t = 3)]
    pub l: usize,
    /// Time bin width in seconds
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Q-statistic false-alarm rate
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    /// Projection threshold for the normal/residual split
    #[arg(long, default_value_t = 3.0)]
    pub sigma_mult: f64,
    /// Greedy identification steps per hash function
    #[arg(long, default_value_t = 4)]
    pub max_identify: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct AstuteArgs {
    #[command(flatten)]
    pub input: MatrixInput,
    /// Significance level of the confidence interval
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DistpcaArgs {
    /// Link-load CSV used as monitor streams; synthetic OD traffic otherwise
    #[arg(long)]
    pub links: Option<PathBuf>,
    /// Time bin width in seconds for --links
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Synthetic monitors
    #[arg(long, default_value_t = 10)]
    pub monitors: usize,
    /// Synthetic time steps
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Period of the synthetic daily cycle in steps
    #[arg(long, default_value_t = 288.0)]
    pub period: f64,
    /// Multiplicative noise of the synthetic streams
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// Sliding window length
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    /// Normal-subspace dimension
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Q-statistic false-alarm rate
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    /// Fixed monitor filter width; overrides --epsilon
    #[arg(long)]
    pub delta: Option<f64>,
    /// Eigen-error tolerance as a fraction of the mean eigenvalue
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelKind {
    Ma,
    Sma,
    Ewma,
    Nshw,
    Arima,
}

#[derive(Args, Debug)]
pub struct SketchArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// Time bin width in seconds
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Count packets instead of bytes
    #[arg(long)]
    pub packets: bool,
    /// Hash functions (sketch rows)
    #[arg(long, default_value_t = 5)]
    pub h: usize,
    /// Buckets per row
    #[arg(long, default_value_t = 1024)]
    pub k: usize,
    /// Forecast model
    #[arg(long, value_enum, default_value_t = ModelKind::Ewma)]
    pub model: ModelKind,
    /// Window for ma and sma
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Smoothing constant for ewma and nshw
    #[arg(long, default_value_t = 0.5)]
    pub smoothing: f64,
    /// Trend constant for nshw
    #[arg(long, default_value_t = 0.5)]
    pub trend: f64,
    /// ARIMA differencing order (0 or 1)
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// ARIMA autoregressive coefficients, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ar: Vec<f64>,
    /// ARIMA moving-average coefficients, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ma: Vec<f64>,
    /// Alarm when a key's forecast error exceeds R times the error sketch's L2 norm
    #[arg(long, default_value_t = 0.3)]
    pub r: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RefKind {
    Buckets,
    Hashes,
}

#[derive(Args, Debug)]
pub struct GammaArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// Address hashed into sub-traces
    #[arg(long, value_enum, default_value_t = AddrKey::Sip)]
    pub key: AddrKey,
    /// Hash functions
    #[arg(long, default_value_t = 8)]
    pub hashes: usize,
    /// Buckets per hash function
    #[arg(long, default_value_t = 16)]
    pub buckets: usize,
    /// Dyadic aggregation levels
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Finest aggregation level in seconds
    #[arg(long, default_value_t = 0.1)]
    pub base_bin: f64,
    /// Distance threshold
    #[arg(long, default_value_t = 3.0)]
    pub lambda: f64,
    /// Reference population for each bucket
    #[arg(long, value_enum, default_value_t = RefKind::Buckets)]
    pub reference: RefKind,
    /// Also alarm on the scale parameter
    #[arg(long)]
    pub use_beta: bool,
    /// Hash functions that must agree on a key (defaults to all of them)
    #[arg(long)]
    pub quorum: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PairMissKind {
    Max,
    Sum,
}

#[derive(Args, Debug)]
pub struct HhhArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// 1 for single addresses, 2 for source/destination pairs
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dim: u8,
    /// Address used in one dimension
    #[arg(long, value_enum, default_value_t = AddrKey::Sip)]
    pub key: AddrKey,
    /// Heavy-hitter fraction of total bytes
    #[arg(long, default_value_t = 0.05)]
    pub phi: f64,
    /// Missed-traffic tolerance as a fraction of the total
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Missed-traffic estimate: copy_all, no_copy or splitting
    #[arg(long, default_value = "copy_all")]
    pub rule: String,
    /// Prefix width in bits (the top bits of each address)
    #[arg(long, default_value_t = 32)]
    pub width: u32,
    /// Fixed split threshold in bytes
    #[arg(long)]
    pub split_threshold: Option<f64>,
    /// Expected total bytes used to derive the split threshold
    #[arg(long)]
    pub expected_total: Option<f64>,
    /// How a prefix pair combines its per-dimension estimates
    #[arg(long, value_enum, default_value_t = PairMissKind::Max)]
    pub pair_miss: PairMissKind,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BankKind {
    Spline,
    Haar,
}

#[derive(Args, Debug)]
pub struct WaveletArgs {
    #[command(flatten)]
    pub input: MatrixInput,
    /// Filter bank
    #[arg(long, value_enum, default_value_t = BankKind::Spline)]
    pub bank: BankKind,
    /// High-band coefficients below this magnitude are dropped
    #[arg(long, default_value_t = 0.0)]
    pub high_threshold: f64,
    /// Local variance window in samples
    #[arg(long, default_value_t = 12)]
    pub window: usize,
    /// Weight of the high band
    #[arg(long, default_value_t = 0.5)]
    pub w_high: f64,
    /// Weight of the mid band
    #[arg(long, default_value_t = 0.5)]
    pub w_mid: f64,
    /// Variability threshold
    #[arg(long, default_value_t = 2.0)]
    pub threshold: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct KalmanArgs {
    #[command(flatten)]
    pub input: MatrixInput,
    /// Detector: variance, cusum, glr, multiscale or var_shift
    #[arg(long, default_value = "glr")]
    pub method: String,
    /// Detector threshold; each method has its own default
    #[arg(long)]
    pub threshold: Option<f64>,
    /// State transition
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Observation gain
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// State noise variance
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    /// Observation noise variance
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct StatGlrArgs {
    #[command(flatten)]
    pub input: MatrixInput,
    /// AR order
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Learning window length
    #[arg(long, default_value_t = 24)]
    pub n_l: usize,
    /// Test window length
    #[arg(long, default_value_t = 12)]
    pub n_s: usize,
    /// Alarm when the change posterior exceeds this
    #[arg(long, default_value_t = 0.99999)]
    pub threshold: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TransformKind {
    SpatialPca,
    TemporalPca,
    Fourier,
    Wavelet,
    Arima,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SolverKind {
    Pinv,
    Omp,
}

#[derive(Args, Debug)]
pub struct AnomographyArgs {
    /// Link-load CSV; link ids sort numerically into routing-matrix rows
    #[arg(long)]
    pub links: PathBuf,
    /// Routing matrix (links × flows)
    #[arg(long)]
    pub routing: PathBuf,
    /// Time bin width in seconds
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Anomaly extraction transform
    #[arg(long, value_enum, default_value_t = TransformKind::Fourier)]
    pub transform: TransformKind,
    /// Cutoff: harmonics removed (fourier) or finest levels kept (wavelet)
    #[arg(long, default_value_t = 3)]
    pub c: usize,
    /// Normal-subspace dimension for the PCA transforms
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// ARIMA differencing order
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// ARIMA autoregressive coefficients, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ar: Vec<f64>,
    /// ARIMA moving-average coefficients, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ma: Vec<f64>,
    /// Inference solver
    #[arg(long, value_enum, default_value_t = SolverKind::Omp)]
    pub solver: SolverKind,
    /// OMP atoms per time bin
    #[arg(long, default_value_t = 1)]
    pub sparsity: usize,
    /// OMP residual tolerance
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Alarm at this many median absolute deviations from the median flow
    #[arg(long, default_value_t = 5.0)]
    pub mad_mult: f64,
    /// Lower bound on the alarm threshold
    #[arg(long, default_value_t = 1e-9)]
    pub min_abs: f64,
    /// Write the inferred anomalies as `time,flow,value` CSV
    #[arg(long)]
    pub x_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub input: FlowInput,
    /// Monitored features, comma separated
    #[arg(long, value_delimiter = ',', default_value = "sip,dip,sp,dp,packets,bytes")]
    pub features: Vec<String>,
    /// Histogram clones per feature
    #[arg(long, default_value_t = 3)]
    pub clones: usize,
    /// Bins per clone
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    /// Measurement interval in seconds
    #[arg(long, default_value_t = 300.0)]
    pub interval: f64,
    /// Intervals used to estimate the KL-difference scale
    #[arg(long, default_value_t = 20)]
    pub training: usize,
    /// Alarm at this many robust standard deviations
    #[arg(long, default_value_t = 3.0)]
    pub sigma_mult: f64,
    /// Pseudo-count added to every bin
    #[arg(long, default_value_t = 0.5)]
    pub pseudo: f64,
    /// Alarmed clones needed for a feature to vote (majority when omitted)
    #[arg(long)]
    pub votes: Option<usize>,
    /// Voting features needed to flag an interval
    #[arg(long, default_value_t = 2)]
    pub min_features: usize,
    /// Minimum item-set support in flows
    #[arg(long, default_value_t = 50)]
    pub min_support: usize,
    /// Also write the per-feature alarms as JSON lines here
    #[arg(long)]
    pub alarms_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    /// CSV of `score,label` rows (label 0/1 or true/false); runs the benchmark when omitted
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Benchmark detector: variance, cusum, glr, multiscale or var_shift
    #[arg(long, default_value = "glr")]
    pub method: String,
    /// Benchmark series length
    #[arg(long, default_value_t = 1000)]
    pub len: usize,
    /// First shifted step
    #[arg(long, default_value_t = 500)]
    pub shift_start: usize,
    /// Shifted steps
    #[arg(long, default_value_t = 20)]
    pub shift_len: usize,
    /// Shift size in observation standard deviations
    #[arg(long, default_value_t = 3.0)]
    pub shift: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SynthKind {
    Flows,
    Links,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnomalyKind {
    Alpha,
    Dos,
    Portscan,
    Netscan,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Generate flow records or link loads
    #[arg(long, value_enum, default_value_t = SynthKind::Flows)]
    pub kind: SynthKind,
    /// Time bins
    #[arg(long, default_value_t = 96)]
    pub bins: usize,
    /// Time bin width in seconds
    #[arg(long, default_value_t = 300.0)]
    pub bin_width: f64,
    /// Daily period in bins
    #[arg(long, default_value_t = 288.0)]
    pub period: f64,
    /// Mean background flows per bin
    #[arg(long, default_value_t = 400.0)]
    pub flows_per_bin: f64,
    /// Source hosts
    #[arg(long, default_value_t = 200)]
    pub sources: usize,
    /// Destination hosts
    #[arg(long, default_value_t = 60)]
    pub dests: usize,
    /// Relative amplitude of the daily cycle
    #[arg(long, default_value_t = 0.3)]
    pub diurnal: f64,
    /// Anomaly to inject (repeatable): alpha, dos, portscan, netscan
    #[arg(long, value_enum)]
    pub anomaly: Vec<AnomalyKind>,
    /// Bin of the injected anomalies (defaults to 5/8 of the trace)
    #[arg(long)]
    pub anomaly_bin: Option<usize>,
    /// Links (links mode)
    #[arg(long, default_value_t = 20)]
    pub links_n: usize,
    /// OD flows (links mode)
    #[arg(long, default_value_t = 50)]
    pub od_flows: usize,
    /// Maximum links per OD flow (links mode)
    #[arg(long, default_value_t = 4)]
    pub max_hops: usize,
    /// Multiplicative OD noise (links mode)
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// OD flow receiving a volume spike (links mode)
    #[arg(long)]
    pub spike_flow: Option<usize>,
    /// Bytes added by the spike
    #[arg(long, default_value_t = 2e7)]
    pub spike_size: f64,
    /// Write the routing matrix here (links mode)
    #[arg(long)]
    pub routing_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn open(p: &Path) -> Res<File> {
    File::open(p).map_err(|e| CliError::Core(Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display())))))
}

fn read_text(p: &Path) -> Res<String> {
    fs::read_to_string(p).map_err(|e| CliError::Core(Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display())))))
}

fn read_flows(path: Option<&Path>) -> Res<Vec<FlowRecord>> {
    Ok(match path {
        Some(p) => read_flow_records(BufReader::new(open(p)?))?,
        None => read_flow_records(io::stdin().lock())?,
    })
}

fn sink(out: Option<&Path>) -> Res<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn series_key(s: &str) -> Res<SeriesKey> {
    match s.to_ascii_lowercase().as_str() {
        "srcdst" => Ok(SeriesKey::SrcDst),
        "five-tuple" | "five_tuple" => Ok(SeriesKey::FiveTuple),
        "total" => Ok(SeriesKey::Total),
        other => Feature::parse(other)
            .map(SeriesKey::Feature)
            .ok_or_else(|| usage(format!("unknown series `{s}`; expected srcdst, five-tuple, total or a feature name"))),
    }
}

fn load_matrix(m: &MatrixInput) -> Res<TrafficMatrix> {
    if let Some(p) = &m.links {
        return Ok(links_to_matrix(&parse_link_records(&read_text(p)?)?, m.bin_width)?);
    }
    let key = series_key(&m.series)?;
    let records = read_flows(m.flows.as_deref())?;
    let volume = if m.packets { Volume::Packets } else { Volume::Bytes };
    Ok(bin_traffic(&records, m.bin_width, key, volume)?)
}

/// SPE alarms for every row of `x`, each tagged with the greedily
/// identified candidate labels.
fn subspace_alarms(
    x: &DMatrix<f64>,
    model: &PcaModel,
    dirs: &[AnomalyDirection],
    labels: &[String],
    alpha: f64,
    max_identify: usize,
    detector: &str,
) -> Res<Vec<Alarm>> {
    let threshold = q_threshold(&model.residual_variances(), alpha)?;
    let mut alarms = Vec::new();
    for t in 0..x.nrows() {
        let row: DVector<f64> = x.row(t).transpose();
        let spe = model.spe(&row);
        if spe <= threshold {
            continue;
        }
        let keys = match greedy_identify(&row, model, dirs, alpha, max_identify) {
            Ok(ix) => ix.iter().map(|&i| labels[i].clone()).collect(),
            Err(e) => {
                log::warn!("bin {t}: identification failed: {e}");
                Vec::new()
            }
        };
        alarms.push(Alarm::new(t, detector, spe, threshold).with_keys(keys));
    }
    Ok(alarms)
}

fn choose_k(x: &DMatrix<f64>, model: PcaModel, k: Option<usize>, sigma_mult: f64) -> Res<PcaModel> {
    let n = model.n();
    if n < 2 {
        return Err(Error::Insufficient("the subspace method needs at least two series".into()).into());
    }
    let k = k.unwrap_or_else(|| split_subspace(x, &model, sigma_mult).detection_k(n));
    log::info!("normal subspace dimension {k} of {n}");
    Ok(model.with_k(k)?)
}

fn run_pca(a: &PcaArgs, w: &mut dyn Write) -> Res<()> {
    let tm = load_matrix(&a.input)?;
    let (model, x) = fit_normalized(tm.values(), a.unit_variance)?;
    let model = choose_k(&x, model, a.k, a.sigma_mult)?;
    let (dirs, labels) = match &a.routing {
        Some(p) => {
            let r = parse_routing_matrix(&read_text(p)?)?;
            if r.nrows() != tm.n_series() {
                return Err(Error::Contract(format!("routing matrix has {} rows for {} links", r.nrows(), tm.n_series())).into());
            }
            let labels: Vec<String> = (0..r.ncols()).map(|j| format!("flow{j}")).collect();
            (AnomalyDirection::routing_columns(&r, &labels)?, labels)
        }
        None => (AnomalyDirection::unit_axes(tm.series_ids()), tm.series_ids().to_vec()),
    };
    let alarms = subspace_alarms(&x, &model, &dirs, &labels, a.alpha, a.max_identify, "pca")?;
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_entropy_pca(a: &EntropyPcaArgs, w: &mut dyn Write) -> Res<()> {
    if a.prefix_len > 32 {
        return Err(usage("prefix length must lie in 0..=32"));
    }
    let records = read_flows(a.input.flows.as_deref())?;
    let binning = Binning::covering(&records, a.bin_width)?;
    let n_bins = binning.n_bins(&records);
    let shift = 32 - a.prefix_len;
    let prefix = |r: &FlowRecord| a.group.of(r).checked_shr(shift).unwrap_or(0);
    let groups: BTreeMap<u32, usize> = records
        .iter()
        .map(prefix)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, i))
        .collect();
    let p = groups.len();
    let tensor = entropy_tensor(&records, &binning, n_bins, p, |r| groups.get(&prefix(r)).copied());
    let em = multiway_recast(&tensor);
    let mut labels = Vec::with_capacity(4 * p);
    for f in Feature::ADDRESS_PORT {
        for g in groups.keys() {
            labels.push(format!("{}/{} {}", Ipv4Addr::from(g.checked_shl(shift).unwrap_or(0)), a.prefix_len, f.name()));
        }
    }
    let (model, x) = fit_normalized(&em.values, true)?;
    let model = choose_k(&x, model, a.k, a.sigma_mult)?;
    let dirs = AnomalyDirection::unit_axes(&labels);
    let alarms = subspace_alarms(&x, &model, &dirs, &labels, a.alpha, a.max_identify, "entropy-pca")?;
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_defeat(a: &DefeatArgs, w: &mut dyn Write) -> Res<()> {
    if a.routers == 0 {
        return Err(usage("need at least one router"));
    }
    let records = read_flows(a.input.flows.as_deref())?;
    let cfg = DefeatConfig {
        m: a.m,
        s: a.s,
        l: a.l,
        seed: a.common.seed,
        bin_width: a.bin_width,
        alpha: a.alpha,
        sigma_mult: a.sigma_mult,
        max_identify: a.max_identify,
    };
    let report = defeat_pipeline(&synth::split_by_router(&records, a.routers), &cfg)?;
    write_alarms(w, &report.alarms)?;
    Ok(())
}

fn run_astute(a: &AstuteArgs, w: &mut dyn Write) -> Res<()> {
    if !(a.p > 0.0 && a.p < 1.0) {
        return Err(usage("--p must lie in (0,1)"));
    }
    let tm = load_matrix(&a.input)?;
    let (_, alarms) = astute_series(&tm, a.p)?;
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_distpca(a: &DistpcaArgs, w: &mut dyn Write) -> Res<()> {
    let streams = match &a.links {
        Some(p) => links_to_matrix(&parse_link_records(&read_text(p)?)?, a.bin_width)?.into_values(),
        None => synth::od_traffic(a.steps, a.monitors, a.period, a.noise, a.common.seed)?,
    };
    let policy = match a.delta {
        Some(d) => DeltaPolicy::Fixed(d),
        None => DeltaPolicy::EpsilonFraction(a.epsilon),
    };
    let report = simulate(&streams, a.window, a.k, policy, a.alpha)?;
    for s in &report.steps {
        serde_json::to_writer(&mut *w, s).map_err(io::Error::other)?;
        writeln!(w)?;
    }
    let summary = serde_json::json!({
        "delta": report.delta,
        "total_messages": report.total_messages,
        "message_ratio": report.message_ratio,
        "agreement": report.agreement,
    });
    writeln!(w, "{summary}")?;
    Ok(())
}

fn forecast_model(a: &SketchArgs) -> ForecastModel {
    match a.model {
        ModelKind::Ma => ForecastModel::Ma { w: a.window },
        ModelKind::Sma => ForecastModel::Sma { w: a.window },
        ModelKind::Ewma => ForecastModel::Ewma { alpha: a.smoothing },
        ModelKind::Nshw => ForecastModel::Nshw { alpha: a.smoothing, beta: a.trend },
        ModelKind::Arima => ForecastModel::Arima { d: a.d, ar: a.ar.clone(), ma: a.ma.clone() },
    }
}

fn run_sketch(a: &SketchArgs, w: &mut dyn Write) -> Res<()> {
    let model = forecast_model(a);
    model.validate()?;
    let records = read_flows(a.input.flows.as_deref())?;
    let binning = Binning::covering(&records, a.bin_width)?;
    let n_bins = binning.n_bins(&records);
    let volume = if a.packets { Volume::Packets } else { Volume::Bytes };
    let empty = KarySketch::new(a.h, a.k, a.common.seed)?;
    let mut sketches = vec![empty; n_bins];
    let mut keys: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); n_bins];
    for r in &records {
        let t = binning.index(r.t);
        let key = hash_key(r.sip, r.dip);
        sketches[t].update(key, volume.of(r));
        keys[t].insert(key);
    }
    // entry t forecasts bin t from bins ..t
    let obs: Vec<DVector<f64>> = sketches.iter().map(|s| DVector::from_column_slice(s.table().as_slice())).collect();
    let forecasts = one_step_forecasts(&model, &obs)?;
    let mut alarms = Vec::new();
    for t in 0..n_bins {
        let Some(f) = &forecasts[t] else { continue };
        let fc = sketches[t].with_table(DMatrix::from_column_slice(a.h, a.k, f.as_slice()))?;
        let ks: Vec<u64> = keys[t].iter().copied().collect();
        let report = change_detect(&sketches[t], &fc, a.r, &ks)?;
        if report.alarms.is_empty() {
            continue;
        }
        let score = report.alarms.iter().map(|(_, e)| e.abs()).fold(0.0, f64::max);
        let names = report.alarms.iter().map(|(k, _)| format_key(*k)).collect();
        alarms.push(Alarm::new(t, "sketch-change", score, report.threshold).with_keys(names));
    }
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_gamma(a: &GammaArgs, w: &mut dyn Write) -> Res<()> {
    let records = read_flows(a.input.flows.as_deref())?;
    let cfg = MultiResConfig {
        n_hashes: a.hashes,
        buckets: a.buckets,
        levels: a.levels,
        base_bin: a.base_bin,
        lambda: a.lambda,
        seed: a.common.seed,
        reference: match a.reference {
            RefKind::Buckets => Reference::Buckets,
            RefKind::Hashes => Reference::Hashes,
        },
        use_beta: a.use_beta,
        quorum: a.quorum.unwrap_or(a.hashes),
    };
    let key = match a.key {
        AddrKey::Sip => KeySelector::Sip,
        AddrKey::Dip => KeySelector::Dip,
    };
    let report = gamma_pipeline(&records, key, &cfg)?;
    let score = report
        .scores
        .iter()
        .filter(|s| s.alarm)
        .map(|s| if a.use_beta { s.d_alpha.max(s.d_beta) } else { s.d_alpha })
        .fold(0.0, f64::max);
    let alarms: Vec<Alarm> = report
        .keys
        .iter()
        .map(|&k| Alarm::new(0, "gamma", score, a.lambda).with_keys(vec![Ipv4Addr::from(k as u32).to_string()]))
        .collect();
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_hhh(a: &HhhArgs, w: &mut dyn Write) -> Res<()> {
    let rule = MissRule::parse(&a.rule).ok_or_else(|| usage(format!("unknown rule `{}`; expected copy_all, no_copy or splitting", a.rule)))?;
    if a.width == 0 || a.width > 32 {
        return Err(usage("--width must lie in 1..=32 for IPv4 addresses"));
    }
    let cfg = HhhConfig {
        phi: a.phi,
        epsilon: a.epsilon,
        width: a.width,
        split_threshold: a.split_threshold,
        expected_total: a.expected_total,
    };
    cfg.validate()?;
    let records = read_flows(a.input.flows.as_deref())?;
    let total: f64 = records.iter().map(|r| r.bytes as f64).sum();
    let shift = 32 - a.width;
    if a.dim == 1 {
        let trie = hhh1d(&records, &cfg, |r| u64::from(a.key.of(r) >> shift))?;
        let est = trie.finalize().estimates(rule);
        for (p, v) in detect_hhh(&est, a.phi, total)? {
            writeln!(w, "{p} {v:.3} {}", rule.name())?;
        }
    } else {
        let combine = match a.pair_miss {
            PairMissKind::Max => PairMiss::Max,
            PairMissKind::Sum => PairMiss::Sum,
        };
        let grid = hhh2d(&records, &cfg)?;
        let est = grid.finalize(combine).estimates(rule);
        for ((p1, p2), v) in detect_hhh(&est, a.phi, total)? {
            writeln!(w, "{p1}>{p2} {v:.3} {}", rule.name())?;
        }
    }
    Ok(())
}

fn run_wavelet(a: &WaveletArgs, w: &mut dyn Write) -> Res<()> {
    let tm = load_matrix(&a.input)?;
    let bank = match a.bank {
        BankKind::Spline => FilterBank::spline_framelet(),
        BankKind::Haar => FilterBank::haar(),
    };
    let cfg = VariabilityConfig { window: a.window, w_high: a.w_high, w_mid: a.w_mid, threshold: a.threshold };
    let mut alarms = Vec::new();
    for (j, id) in tm.series_ids().iter().enumerate() {
        let col: Vec<f64> = tm.values().column(j).iter().copied().collect();
        let (_, v) = wavelet_detect(&col, &bank, a.high_threshold, &cfg)?;
        for msg in &v.warnings {
            log::warn!("{id}: {msg}");
        }
        for p in &v.peaks {
            alarms.push(Alarm::new(p.at, "wavelet", p.height, a.threshold).with_keys(vec![id.clone()]));
        }
    }
    alarms.sort_by_key(|x| x.t_index);
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_kalman(a: &KalmanArgs, w: &mut dyn Write) -> Res<()> {
    let mut method = Method::by_name(&a.method)?;
    if let Some(t) = a.threshold {
        method = method.with_threshold(t);
    }
    let model = StateSpaceModel::scalar(a.a, a.c, a.q, a.r)?;
    let tm = load_matrix(&a.input)?;
    let detector = format!("kalman:{}", method.name());
    let mut alarms = Vec::new();
    for (j, id) in tm.series_ids().iter().enumerate() {
        let col = tm.values().column(j);
        let n = col.len() as f64;
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if sd.is_nan() || sd <= 0.0 {
            log::warn!("{id}: constant series skipped");
            continue;
        }
        let ys: Vec<DVector<f64>> = col.iter().map(|v| DVector::from_element(1, (v - mean) / sd)).collect();
        let trace = kalman_filter(&model, &ys, &DVector::zeros(1), &DMatrix::identity(1, 1))?;
        let tau = trace.tau_series(0);
        let scale = trace.scale_series(0);
        let d = detect(&tau, Some(&scale), &method)?;
        for &t in &d.alarms {
            alarms.push(Alarm::new(t, detector.as_str(), d.scores[t], method.threshold()).with_keys(vec![id.clone()]));
        }
    }
    alarms.sort_by_key(|x| x.t_index);
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_statglr(a: &StatGlrArgs, w: &mut dyn Write) -> Res<()> {
    let cfg = GlrConfig { p: a.p, n_l: a.n_l, n_s: a.n_s };
    let tm = load_matrix(&a.input)?;
    let mut alarms = Vec::new();
    for (j, id) in tm.series_ids().iter().enumerate() {
        let col: Vec<f64> = tm.values().column(j).iter().copied().collect();
        for (t, eta) in glr_series(&col, &cfg)?.into_iter().enumerate() {
            if let Some(eta) = eta.filter(|e| *e > a.threshold) {
                alarms.push(Alarm::new(t, "statglr", eta, a.threshold).with_keys(vec![id.clone()]));
            }
        }
    }
    alarms.sort_by_key(|x| x.t_index);
    write_alarms(w, &alarms)?;
    Ok(())
}

fn run_anomography(a: &AnomographyArgs, w: &mut dyn Write) -> Res<()> {
    let tm = links_to_matrix(&parse_link_records(&read_text(&a.links)?)?, a.bin_width)?;
    let routing = parse_routing_matrix(&read_text(&a.routing)?)?;
    let transform = match a.transform {
        TransformKind::SpatialPca => Transform::SpatialPca { k: a.k },
        TransformKind::TemporalPca => Transform::TemporalPca { k: a.k },
        TransformKind::Fourier => Transform::Fourier { c: a.c },
        TransformKind::Wavelet => Transform::Wavelet { c: a.c },
        TransformKind::Arima => Transform::Arima { d: a.d, ar: a.ar.clone(), ma: a.ma.clone() },
    };
    let solver = match a.solver {
        SolverKind::Pinv => Solver::PseudoInverse,
        SolverKind::Omp => Solver::Omp { k: a.sparsity, tol: a.tol },
    };
    let rule = AlarmRule { mad_mult: a.mad_mult, min_abs: a.min_abs };
    let result = anomography_pipeline(tm.values(), &routing, &transform, &solver, &rule)?;
    if let Some(p) = &a.x_out {
        fs::write(p, result.x_csv())?;
    }
    write_alarms(w, &result.alarms)?;
    Ok(())
}

fn run_extract(a: &ExtractArgs, w: &mut dyn Write) -> Res<()> {
    let features = a
        .features
        .iter()
        .map(|f| Feature::parse(f.trim()).ok_or_else(|| usage(format!("unknown feature `{f}`"))))
        .collect::<Res<Vec<_>>>()?;
    let cfg = ExtractConfig {
        features,
        clones: a.clones,
        bins: a.bins,
        interval: a.interval,
        kl: KlConfig { training: a.training, sigma_mult: a.sigma_mult, pseudo: a.pseudo },
        votes: a.votes,
        min_features: a.min_features,
        min_support: a.min_support,
        seed: a.common.seed,
    };
    cfg.validate()?;
    let records = read_flows(a.input.flows.as_deref())?;
    let report = extract_pipeline(&records, &cfg)?;
    for f in &report.findings {
        for set in &f.itemsets {
            writeln!(w, "{set}")?;
        }
    }
    if let Some(p) = &a.alarms_out {
        let mut file = BufWriter::new(File::create(p)?);
        write_alarms(&mut file, &report.alarms)?;
        file.flush()?;
    }
    Ok(())
}

fn parse_scored(text: &str) -> Res<(Vec<f64>, Vec<bool>)> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.replace(' ', "") == "score,label") {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
        let (s, l) = line.split_once(',').ok_or_else(|| bad("expected `score,label`"))?;
        let s: f64 = s.trim().parse().map_err(|_| bad("invalid score"))?;
        let l = match l.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("label must be 0, 1, true or false").into()),
        };
        scores.push(s);
        labels.push(l);
    }
    Ok((scores, labels))
}

fn run_roc(a: &RocArgs, w: &mut dyn Write) -> Res<()> {
    let roc = match &a.input {
        Some(p) => {
            let (scores, labels) = parse_scored(&read_text(p)?)?;
            roc_curve(&scores, &labels)?
        }
        None => {
            let method = Method::by_name(&a.method)?;
            let b = mean_shift_benchmark(a.len, a.shift_start, a.shift_len, a.shift, a.common.seed)?;
            let d = detect(&b.tau, Some(&b.scale), &method)?;
            roc_curve(&d.scores, &b.labels)?
        }
    };
    w.write_all(roc.to_csv().as_bytes())?;
    Ok(())
}

fn anomaly(kind: AnomalyKind, bin: usize) -> Anomaly {
    match kind {
        AnomalyKind::Alpha => Anomaly::Alpha { bin, sip: synth::source_ip(5), dip: synth::dest_ip(5), packets: 200_000 },
        AnomalyKind::Dos => Anomaly::Dos { bin, dip: synth::dest_ip(20), dp: 7000, sources: 150 },
        AnomalyKind::Portscan => Anomaly::PortScan { bin, sip: synth::source_ip(150), dip: synth::dest_ip(9), ports: 120 },
        AnomalyKind::Netscan => Anomaly::NetScan { bin, sip: synth::source_ip(170), targets: 120, dp: 445 },
    }
}

fn run_synth(a: &SynthArgs, w: &mut dyn Write) -> Res<()> {
    let seed = a.common.seed;
    match a.kind {
        SynthKind::Flows => {
            let cfg = TrafficConfig {
                n_bins: a.bins,
                bin_width: a.bin_width,
                flows_per_bin: a.flows_per_bin,
                n_sources: a.sources,
                n_dests: a.dests,
                diurnal: a.diurnal,
                period_bins: a.period,
                seed,
            };
            let bin = a.anomaly_bin.unwrap_or(a.bins * 5 / 8);
            if !a.anomaly.is_empty() && bin >= a.bins {
                return Err(usage(format!("anomaly bin {bin} is past the last bin {}", a.bins.saturating_sub(1))));
            }
            let anomalies: Vec<Anomaly> = a.anomaly.iter().map(|k| anomaly(*k, bin)).collect();
            write_flow_records(w, &synth::flows(&cfg, &anomalies)?)?;
        }
        SynthKind::Links => {
            if !a.anomaly.is_empty() {
                return Err(usage("--anomaly applies to flow traces; use --spike-flow for links"));
            }
            let routing = synth::random_routing(a.links_n, a.od_flows, a.max_hops, seed)?;
            let mut x = synth::od_traffic(a.bins, a.od_flows, a.period, a.noise, seed.wrapping_add(1))?;
            if let Some(f) = a.spike_flow {
                let bin = a.anomaly_bin.unwrap_or(a.bins * 5 / 8);
                if f >= a.od_flows || bin >= a.bins {
                    return Err(usage("spike flow or bin out of range"));
                }
                x[(bin, f)] += a.spike_size;
            }
            let y = &x * routing.transpose();
            let mut records = Vec::with_capacity(y.len());
            for t in 0..y.nrows() {
                for l in 0..y.ncols() {
                    records.push(LinkRecord { t: t as f64 * a.bin_width, link_id: l.to_string(), bytes: y[(t, l)].round() });
                }
            }
            write_link_records(&mut *w, &records)?;
            if let Some(p) = &a.routing_out {
                let mut file = BufWriter::new(File::create(p)?);
                write_routing_matrix(&mut file, &routing)?;
                file.flush()?;
            }
        }
    }
    Ok(())
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Pca(a) => &a.common,
            Cmd::EntropyPca(a) => &a.common,
            Cmd::Defeat(a) => &a.common,
            Cmd::Astute(a) => &a.common,
            Cmd::DistpcaSim(a) => &a.common,
            Cmd::SketchChange(a) => &a.common,
            Cmd::Gamma(a) => &a.common,
            Cmd::Hhh(a) => &a.common,
            Cmd::Wavelet(a) => &a.common,
            Cmd::Kalman(a) => &a.common,
            Cmd::Statglr(a) => &a.common,
            Cmd::Anomography(a) => &a.common,
            Cmd::Extract(a) => &a.common,
            Cmd::Roc(a) => &a.common,
            Cmd::Synth(a) => &a.common,
        }
    }
}

pub fn dispatch(cli: &Cli) -> Res<()> {
    let mut w = sink(cli.command.common().out.as_deref())?;
    match &cli.command {
        Cmd::Pca(a) => run_pca(a, &mut w),
        Cmd::EntropyPca(a) => run_entropy_pca(a, &mut w),
        Cmd::Defeat(a) => run_defeat(a, &mut w),
        Cmd::Astute(a) => run_astute(a, &mut w),
        Cmd::DistpcaSim(a) => run_distpca(a, &mut w),
        Cmd::SketchChange(a) => run_sketch(a, &mut w),
        Cmd::Gamma(a) => run_gamma(a, &mut w),
        Cmd::Hhh(a) => run_hhh(a, &mut w),
        Cmd::Wavelet(a) => run_wavelet(a, &mut w),
        Cmd::Kalman(a) => run_kalman(a, &mut w),
        Cmd::Statglr(a) => run_statglr(a, &mut w),
        Cmd::Anomography(a) => run_anomography(a, &mut w),
        Cmd::Extract(a) => run_extract(a, &mut w),
        Cmd::Roc(a) => run_roc(a, &mut w),
        Cmd::Synth(a) => run_synth(a, &mut w),
    }?;
    w.flush()?;
    Ok(())
}
