use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::phantom::{PhantomKind, MIN_PHANTOM_SIZE};
use crate::error::{Error, Result};
use crate::priors::{SMOOTHING_MAX_WIDTH, SMOOTHING_WIDTH_PER_SIGMA};
use crate::sensing::SensorKind;

/// Compression ratios swept when `cr_list` is not given.
pub const DEFAULT_CR_LIST: [f64; 4] = [0.01, 0.05, 0.10, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pinv,
    DdimGap,
    DdimHqs,
    DdimFused,
    PnpHqs,
    PnpGap,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Pinv,
        Method::DdimGap,
        Method::DdimHqs,
        Method::DdimFused,
        Method::PnpHqs,
        Method::PnpGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pinv => "pinv",
            Method::DdimGap => "ddim-gap",
            Method::DdimHqs => "ddim-hqs",
            Method::DdimFused => "ddim-fused",
            Method::PnpHqs => "pnp-hqs",
            Method::PnpGap => "pnp-gap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    pub fn needs_prior(self) -> bool {
        self != Method::Pinv
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    None,
    Smoothing {
        width_per_sigma: f64,
        max_width: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
}

impl PriorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PriorSpec::None => "none",
            PriorSpec::Smoothing { .. } => "smoothing",
            PriorSpec::Gaussian { .. } => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Phantom {
        kind: PhantomKind,
        size: usize,
        count: usize,
        seed: u64,
    },
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSchedule {
    /// Linear ramp from 0 at `t = T` to 1 at `t = 1`.
    Ramp,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub image: ImageSource,
    pub cr_list: Vec<f64>,
    pub methods: Vec<Method>,
    pub prior: PriorSpec,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub zeta: f64,
    pub lambda: f64,
    pub delta: DeltaSchedule,
    pub pnp_iterations: usize,
    pub pnp_gamma: f64,
    pub sensor: SensorKind,
    pub sensor_seed: u64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub trace: bool,
    pub write_images: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            image: ImageSource::Phantom {
                kind: PhantomKind::SmoothBumps,
                size: 64,
                count: 4,
                seed: 0,
            },
            cr_list: DEFAULT_CR_LIST.to_vec(),
            methods: vec![Method::DdimFused],
            prior: PriorSpec::Smoothing {
                width_per_sigma: SMOOTHING_WIDTH_PER_SIGMA,
                max_width: SMOOTHING_MAX_WIDTH,
            },
            steps: 100,
            beta_min: 1e-3,
            beta_max: 0.2,
            zeta: 0.0,
            lambda: 0.05,
            delta: DeltaSchedule::Ramp,
            pnp_iterations: 30,
            pnp_gamma: 1.0,
            sensor: SensorKind::OrthonormalRandom,
            sensor_seed: 0,
            seeds: vec![0],
            output_dir: PathBuf::from("spirecon-out"),
            threads: 0,
            trace: false,
            write_images: true,
        }
    }
}

const KEYS: [&str; 27] = [
    "T",
    "beta_max",
    "beta_min",
    "cr_list",
    "delta",
    "image_seed",
    "images",
    "input",
    "lambda",
    "methods",
    "output_dir",
    "phantom",
    "pnp_gamma",
    "pnp_iterations",
    "prior",
    "prior_mean",
    "prior_variance",
    "seeds",
    "sensor",
    "sensor_seed",
    "size",
    "smoothing_max_width",
    "smoothing_width",
    "threads",
    "trace",
    "write_images",
    "zeta",
];

/// Keys that do not change any reported number and are left out of the hash.
const UNHASHED_KEYS: [&str; 2] = ["output_dir", "threads"];

impl ExperimentConfig {
    /// Parses the flat `key = value` format.
    ///
    /// Blank lines and lines starting with `#` are ignored, lists are
    /// comma-separated and unspecified keys keep their defaults. `method` is
    /// accepted as an alias of `methods`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = match key.trim() {
                "method" => "methods",
                k => k,
            };
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Self::from_entries(&entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn from_entries(e: &BTreeMap<String, String>) -> Result<Self> {
        let d = Self::default();
        let get = |k: &str| e.get(k).map(String::as_str);

        let (def_kind, def_size, def_count, def_seed) = match d.image {
            ImageSource::Phantom {
                kind,
                size,
                count,
                seed,
            } => (kind, size, count, seed),
            ImageSource::Files(_) => unreachable!("default source is a phantom"),
        };
        let image = match get("input") {
            Some(list) => {
                for k in ["phantom", "size", "images", "image_seed"] {
                    if e.contains_key(k) {
                        return Err(Error::Config(format!(
                            "`{k}` cannot be combined with `input`"
                        )));
                    }
                }
                ImageSource::Files(split_list(list).map(PathBuf::from).collect())
            }
            None => ImageSource::Phantom {
                kind: get("phantom")
                    .map(PhantomKind::parse)
                    .transpose()?
                    .unwrap_or(def_kind),
                size: opt(get("size"), "size")?.unwrap_or(def_size),
                count: opt(get("images"), "images")?.unwrap_or(def_count),
                seed: opt(get("image_seed"), "image_seed")?.unwrap_or(def_seed),
            },
        };

        let prior = match get("prior").unwrap_or(d.prior.name()) {
            "none" => PriorSpec::None,
            "smoothing" => PriorSpec::Smoothing {
                width_per_sigma: opt(get("smoothing_width"), "smoothing_width")?
                    .unwrap_or(SMOOTHING_WIDTH_PER_SIGMA),
                max_width: opt(get("smoothing_max_width"), "smoothing_max_width")?
                    .unwrap_or(SMOOTHING_MAX_WIDTH),
            },
            "gaussian" => PriorSpec::Gaussian {
                mean: opt(get("prior_mean"), "prior_mean")?.unwrap_or(0.5),
                variance: opt(get("prior_variance"), "prior_variance")?.unwrap_or(0.05),
            },
            other => return Err(Error::Config(format!("unknown prior `{other}`"))),
        };
        let prior_keys: &[&str] = match prior {
            PriorSpec::None => &[],
            PriorSpec::Smoothing { .. } => &["smoothing_width", "smoothing_max_width"],
            PriorSpec::Gaussian { .. } => &["prior_mean", "prior_variance"],
        };
        for k in [
            "smoothing_width",
            "smoothing_max_width",
            "prior_mean",
            "prior_variance",
        ] {
            if e.contains_key(k) && !prior_keys.contains(&k) {
                return Err(Error::Config(format!(
                    "`{k}` does not apply to prior `{}`",
                    prior.name()
                )));
            }
        }

        let delta = match get("delta") {
            None | Some("ramp") => DeltaSchedule::Ramp,
            Some(v) => DeltaSchedule::Constant(parse_value(v, "delta")?),
        };

        let cfg = Self {
            image,
            cr_list: list(get("cr_list"), "cr_list")?.unwrap_or(d.cr_list),
            methods: match get("methods") {
                Some(v) => split_list(v).map(Method::parse).collect::<Result<_>>()?,
                None => d.methods,
            },
            prior,
            steps: opt(get("T"), "T")?.unwrap_or(d.steps),
            beta_min: opt(get("beta_min"), "beta_min")?.unwrap_or(d.beta_min),
            beta_max: opt(get("beta_max"), "beta_max")?.unwrap_or(d.beta_max),
            zeta: opt(get("zeta"), "zeta")?.unwrap_or(d.zeta),
            lambda: opt(get("lambda"), "lambda")?.unwrap_or(d.lambda),
            delta,
            pnp_iterations: opt(get("pnp_iterations"), "pnp_iterations")?
                .unwrap_or(d.pnp_iterations),
            pnp_gamma: opt(get("pnp_gamma"), "pnp_gamma")?.unwrap_or(d.pnp_gamma),
            sensor: get("sensor")
                .map(SensorKind::parse)
                .transpose()?
                .unwrap_or(d.sensor),
            sensor_seed: opt(get("sensor_seed"), "sensor_seed")?.unwrap_or(d.sensor_seed),
            seeds: list(get("seeds"), "seeds")?.unwrap_or(d.seeds),
            output_dir: get("output_dir").map(PathBuf::from).unwrap_or(d.output_dir),
            threads: opt(get("threads"), "threads")?.unwrap_or(d.threads),
            trace: opt(get("trace"), "trace")?.unwrap_or(d.trace),
            write_images: opt(get("write_images"), "write_images")?.unwrap_or(d.write_images),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match &self.image {
            ImageSource::Phantom { size, count, .. } => {
                if *size < MIN_PHANTOM_SIZE {
                    return bad(format!("phantom size must be at least {MIN_PHANTOM_SIZE}"));
                }
                if *count == 0 {
                    return bad("`images` must be at least 1".into());
                }
                if self.sensor == SensorKind::ScrambledHadamard && !size.is_power_of_two() {
                    return bad("scrambled-hadamard needs a power-of-two image size".into());
                }
            }
            ImageSource::Files(paths) if paths.is_empty() => {
                return bad("`input` lists no files".into())
            }
            ImageSource::Files(_) => {}
        }
        if self.sensor == SensorKind::Explicit {
            return bad(
                "experiments build their own sensors; use orthonormal-random or scrambled-hadamard"
                    .into(),
            );
        }
        if self.cr_list.is_empty() {
            return bad("`cr_list` is empty".into());
        }
        if let Some(cr) = self.cr_list.iter().find(|cr| !(**cr > 0.0 && **cr <= 1.0)) {
            return bad(format!("compression ratio {cr} outside (0, 1]"));
        }
        if self.methods.is_empty() {
            return bad("`methods` is empty".into());
        }
        if self.seeds.is_empty() {
            return bad("`seeds` is empty".into());
        }
        if self.prior == PriorSpec::None {
            if let Some(m) = self.methods.iter().find(|m| m.needs_prior()) {
                return bad(format!("method `{}` needs a prior", m.name()));
            }
        }
        match self.prior {
            PriorSpec::Smoothing {
                width_per_sigma,
                max_width,
            } if !(width_per_sigma > 0.0 && max_width > 0.0) => {
                return bad("smoothing widths must be positive".into())
            }
            PriorSpec::Gaussian { mean, variance } if !(mean.is_finite() && variance > 0.0) => {
                return bad("gaussian prior needs a finite mean and positive variance".into())
            }
            _ => {}
        }
        if self.steps == 0 {
            return bad("`T` must be at least 1".into());
        }
        if !(0.0 < self.beta_min && self.beta_min <= self.beta_max && self.beta_max < 1.0) {
            return bad("need 0 < beta_min <= beta_max < 1".into());
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return bad("`zeta` must lie in [0, 1]".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("`lambda` must be positive".into());
        }
        if let DeltaSchedule::Constant(d) = self.delta {
            if !(0.0..=1.0).contains(&d) {
                return bad("constant `delta` must lie in [0, 1]".into());
            }
        }
        if self.pnp_iterations == 0 {
            return bad("`pnp_iterations` must be at least 1".into());
        }
        if !(self.pnp_gamma > 0.0 && self.pnp_gamma.is_finite()) {
            return bad("`pnp_gamma` must be positive".into());
        }
        Ok(())
    }

    /// Every key with its resolved value, sorted by key.
    pub fn canonical_entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        match &self.image {
            ImageSource::Phantom {
                kind,
                size,
                count,
                seed,
            } => {
                m.insert("phantom", kind.name().to_string());
                m.insert("size", size.to_string());
                m.insert("images", count.to_string());
                m.insert("image_seed", seed.to_string());
            }
            ImageSource::Files(paths) => {
                m.insert("input", join(paths.iter().map(|p| p.display())));
            }
        }
        m.insert("cr_list", join(self.cr_list.iter()));
        m.insert("methods", join(self.methods.iter().map(|x| x.name())));
        m.insert("prior", self.prior.name().to_string());
        match self.prior {
            PriorSpec::None => {}
            PriorSpec::Smoothing {
                width_per_sigma,
                max_width,
            } => {
                m.insert("smoothing_width", width_per_sigma.to_string());
                m.insert("smoothing_max_width", max_width.to_string());
            }
            PriorSpec::Gaussian { mean, variance } => {
                m.insert("prior_mean", mean.to_string());
                m.insert("prior_variance", variance.to_string());
            }
        }
        m.insert("T", self.steps.to_string());
        m.insert("beta_min", self.beta_min.to_string());
        m.insert("beta_max", self.beta_max.to_string());
        m.insert("zeta", self.zeta.to_string());
        m.insert("lambda", self.lambda.to_string());
        m.insert(
            "delta",
            match self.delta {
                DeltaSchedule::Ramp => "ramp".to_string(),
                DeltaSchedule::Constant(d) => d.to_string(),
            },
        );
        m.insert("pnp_iterations", self.pnp_iterations.to_string());
        m.insert("pnp_gamma", self.pnp_gamma.to_string());
        m.insert("sensor", self.sensor.name().to_string());
        m.insert("sensor_seed", self.sensor_seed.to_string());
        m.insert("seeds", join(self.seeds.iter()));
        m.insert("output_dir", self.output_dir.display().to_string());
        m.insert("threads", self.threads.to_string());
        m.insert("trace", self.trace.to_string());
        m.insert("write_images", self.write_images.to_string());
        m
    }

    /// The config in its own file format, keys sorted. Parsing the result
    /// gives back an equal config.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.canonical_entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 (hex) of the canonical form, excluding the output directory
    /// and thread count.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.canonical_entries() {
            if UNHASHED_KEYS.contains(&k) {
                continue;
            }
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_value<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn opt<T: std::str::FromStr>(v: Option<&str>, key: &str) -> Result<Option<T>> {
    v.map(|v| parse_value(v, key)).transpose()
}

fn list<T: std::str::FromStr>(v: Option<&str>, key: &str) -> Result<Option<Vec<T>>> {
    v.map(|v| split_list(v).map(|x| parse_value(x, key)).collect())
        .transpose()
}
