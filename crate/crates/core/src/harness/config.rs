use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::baselines::BaselineKind;
use crate::criterion::{CriterionConfig, MeasureKind, QsiProblem};
use crate::error::{QsiError, Result};
use crate::geometry::BoxBounds;
use crate::gp::{CriticalRegion, Orientation};
use crate::problems::{ExternalEvaluator, Marginal, SDistribution, TestProblem};

/// Point-selection strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    QsiSur(MeasureKind),
    Baseline(BaselineKind),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::QsiSur(MeasureKind::Misclassification) => f.write_str("qsi_sur"),
            Strategy::QsiSur(kind) => write!(f, "qsi_sur:{kind}"),
            Strategy::Baseline(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = QsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("qsi_sur", kind)) => Ok(Strategy::QsiSur(kind.parse()?)),
            None if s == "qsi_sur" => Ok(Strategy::QsiSur(MeasureKind::Misclassification)),
            _ => s
                .parse::<BaselineKind>()
                .map(Strategy::Baseline)
                .map_err(|_| QsiError::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// A problem defined in the configuration and evaluated by an external process.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomProblem {
    pub command: String,
    pub x_box: BoxBounds,
    pub s_marginals: Vec<Marginal>,
    pub region: CriticalRegion,
    pub alpha: f64,
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub strategy: Strategy,
    pub n0: usize,
    /// Discretization sizes; the measure is taken from `strategy`.
    pub criterion: CriterionConfig,
    pub budget: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Draw a new `S̃` at every iteration rather than once per repetition.
    pub resample_s_each_step: bool,
    /// Record wall-clock time per iteration (otherwise written as 0, keeping
    /// the output files reproducible).
    pub timing: bool,
    pub log2_x: u32,
    pub log2_s: u32,
    pub lhs_candidates: usize,
    pub output: PathBuf,
    pub custom: Option<CustomProblem>,
}

impl RunConfig {
    /// Published settings for `f1`, `f2` and `f3`.
    pub fn for_problem(problem: &str, strategy: Strategy) -> Result<Self> {
        let (n0, n_x, n_s, n_pi) = match problem {
            "f1" => (20, 500, 100, 15),
            "f2" | "f3" => (40, 1000, 25, 60),
            other => return Err(QsiError::Config(format!("no default settings for problem `{other}`"))),
        };
        Ok(RunConfig {
            problem: problem.to_string(),
            strategy,
            n0,
            criterion: CriterionConfig {
                n_x,
                n_s,
                n_pi,
                n_c: 200,
                n_nodes: 15,
                m_paths: 250,
                kind: MeasureKind::Misclassification,
                fresh_ensemble_per_candidate: false,
            },
            budget: 30,
            repetitions: 1,
            seed: 0,
            resample_s_each_step: true,
            timing: false,
            log2_x: 13,
            log2_s: 8,
            lhs_candidates: 1000,
            output: PathBuf::from("results"),
            custom: None,
        })
    }

    /// Reduced discretizations for quick end-to-end checks.
    pub fn into_smoke(mut self) -> Self {
        self.criterion.n_x = self.criterion.n_x.min(200);
        self.criterion.n_c = self.criterion.n_c.min(50);
        self.criterion.n_nodes = 5;
        self.criterion.m_paths = 50;
        self.lhs_candidates = self.lhs_candidates.min(100);
        self
    }

    /// Criterion settings with the measure of the configured strategy.
    pub fn criterion_config(&self) -> CriterionConfig {
        let mut c = self.criterion.clone();
        if let Strategy::QsiSur(kind) = self.strategy {
            c.kind = kind;
        }
        c
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QsiError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep the
    /// defaults of the chosen problem.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| QsiError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let problem = get("problem").ok_or_else(|| QsiError::Config("missing `problem`".into()))?;
        let strategy: Strategy = get("strategy")
            .ok_or_else(|| QsiError::Config("missing `strategy`".into()))?
            .parse()?;
        let mut cfg = match problem {
            "f1" | "f2" | "f3" => RunConfig::for_problem(problem, strategy)?,
            _ => {
                let custom = parse_custom(&get)?;
                let dx = custom.x_box.dim();
                let mut c = RunConfig::for_problem("f2", strategy)?;
                c.problem = problem.to_string();
                c.n0 = 10 * (dx + custom.s_marginals.len());
                c.criterion.n_x = 500 * dx;
                c.custom = Some(custom);
                c
            }
        };
        const KNOWN: [&str; 28] = [
            "problem", "strategy", "n0", "n_x", "n_s", "n_pi", "n_c", "n_nodes", "m_paths", "budget",
            "repetitions", "seed", "resample_s_each_step", "fresh_ensemble_per_candidate", "timing", "log2_x",
            "log2_s", "lhs_candidates", "output", "command", "x_lower", "x_upper", "s_marginals", "threshold",
            "orientation", "alpha", "N", "M",
        ];
        for (k, v) in &pairs {
            let bad = |what: &str| QsiError::Config(format!("`{k}`: {what} `{v}`"));
            let count = || v.parse::<usize>().map_err(|_| bad("expected a count, got"));
            let flag = || v.parse::<bool>().map_err(|_| bad("expected true or false, got"));
            match k.as_str() {
                "n0" => cfg.n0 = count()?,
                "n_x" => cfg.criterion.n_x = count()?,
                "n_s" => cfg.criterion.n_s = count()?,
                "n_pi" => cfg.criterion.n_pi = count()?,
                "n_c" => cfg.criterion.n_c = count()?,
                "n_nodes" | "N" => cfg.criterion.n_nodes = count()?,
                "m_paths" | "M" => cfg.criterion.m_paths = count()?,
                "budget" => cfg.budget = count()?,
                "repetitions" => cfg.repetitions = count()?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad("expected an integer, got"))?,
                "resample_s_each_step" => cfg.resample_s_each_step = flag()?,
                "fresh_ensemble_per_candidate" => cfg.criterion.fresh_ensemble_per_candidate = flag()?,
                "timing" => cfg.timing = flag()?,
                "log2_x" => cfg.log2_x = count()? as u32,
                "log2_s" => cfg.log2_s = count()? as u32,
                "lhs_candidates" => cfg.lhs_candidates = count()?,
                "output" => cfg.output = PathBuf::from(v),
                other if KNOWN.contains(&other) => {}
                other => return Err(QsiError::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Inverse of [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let c = &self.criterion;
        let mut s = String::new();
        let _ = writeln!(s, "problem = {}", self.problem);
        let _ = writeln!(s, "strategy = {}", self.strategy);
        for (k, v) in [
            ("n0", self.n0),
            ("n_x", c.n_x),
            ("n_s", c.n_s),
            ("n_pi", c.n_pi),
            ("n_c", c.n_c),
            ("n_nodes", c.n_nodes),
            ("m_paths", c.m_paths),
            ("budget", self.budget),
            ("repetitions", self.repetitions),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "resample_s_each_step = {}", self.resample_s_each_step);
        let _ = writeln!(s, "fresh_ensemble_per_candidate = {}", c.fresh_ensemble_per_candidate);
        let _ = writeln!(s, "timing = {}", self.timing);
        let _ = writeln!(s, "log2_x = {}", self.log2_x);
        let _ = writeln!(s, "log2_s = {}", self.log2_s);
        let _ = writeln!(s, "lhs_candidates = {}", self.lhs_candidates);
        let _ = writeln!(s, "output = {}", self.output.display());
        if let Some(p) = &self.custom {
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
            let _ = writeln!(s, "command = {}", p.command);
            let _ = writeln!(s, "x_lower = {}", join(p.x_box.lower()));
            let _ = writeln!(s, "x_upper = {}", join(p.x_box.upper()));
            let m: Vec<String> = p
                .s_marginals
                .iter()
                .map(|m| match m {
                    Marginal::Uniform { lo, hi } => format!("uniform({lo:?},{hi:?})"),
                    Marginal::ScaledBeta { a, b, lo, hi } => format!("beta({a:?},{b:?},{lo:?},{hi:?})"),
                })
                .collect();
            let _ = writeln!(s, "s_marginals = {}", m.join(" "));
            let _ = writeln!(s, "threshold = {:?}", p.region.threshold);
            let o = match p.region.orientation {
                Orientation::Below => "below",
                Orientation::Above => "above",
            };
            let _ = writeln!(s, "orientation = {o}");
            let _ = writeln!(s, "alpha = {:?}", p.alpha);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return Err(QsiError::Config("n0 must be at least 2".into()));
        }
        if self.repetitions == 0 || self.lhs_candidates == 0 {
            return Err(QsiError::Config("repetitions and lhs_candidates must be positive".into()));
        }
        if self.log2_x > 20 || self.log2_s > 16 {
            return Err(QsiError::Config("prediction grid exponents too large".into()));
        }
        self.criterion.validate()
    }

    /// The problem named by the configuration.
    pub fn build_problem(&self) -> Result<TestProblem> {
        match &self.custom {
            None => TestProblem::builtin(&self.problem),
            Some(c) => {
                let dist = SDistribution::new(c.s_marginals.clone())?;
                let s_box = dist.support();
                let qsi = QsiProblem::new(c.x_box.clone(), s_box, dist, c.region, c.alpha)?;
                let ev = ExternalEvaluator::spawn(&c.command)?;
                Ok(TestProblem::custom(&self.problem, qsi, Arc::new(ev)))
            }
        }
    }
}

fn parse_floats(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| QsiError::Config(format!("`{key}`: bad number `{t}`"))))
        .collect()
}

fn parse_marginal(token: &str) -> Result<Marginal> {
    let bad = || QsiError::Config(format!("bad marginal `{token}`"));
    let (name, rest) = token.split_once('(').ok_or_else(bad)?;
    let args = rest.strip_suffix(')').ok_or_else(bad)?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match (name.trim(), nums.as_slice()) {
        ("uniform", [lo, hi]) => Marginal::uniform(*lo, *hi),
        ("beta", [a, b, lo, hi]) => Marginal::scaled_beta(*a, *b, *lo, *hi),
        _ => Err(bad()),
    }
}

fn parse_custom<'a>(get: &impl Fn(&str) -> Option<&'a str>) -> Result<CustomProblem> {
    let need = |k: &str| get(k).ok_or_else(|| QsiError::Config(format!("custom problem needs `{k}`")));
    let x_box = BoxBounds::new(parse_floats("x_lower", need("x_lower")?)?, parse_floats("x_upper", need("x_upper")?)?)
        .map_err(|e| QsiError::Config(e.to_string()))?;
    let s_marginals = need("s_marginals")?
        .split_whitespace()
        .map(parse_marginal)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| QsiError::Config(e.to_string()))?;
    let threshold: f64 = need("threshold")?
        .parse()
        .map_err(|_| QsiError::Config("`threshold` must be a number".into()))?;
    let region = match get("orientation").unwrap_or("below") {
        "below" => CriticalRegion::below(threshold),
        "above" => CriticalRegion::above(threshold),
        other => return Err(QsiError::Config(format!("`orientation` must be below or above, got `{other}`"))),
    };
    let alpha: f64 = need("alpha")?
        .parse()
        .map_err(|_| QsiError::Config("`alpha` must be a number".into()))?;
    Ok(CustomProblem {
        command: need("command")?.to_string(),
        x_box,
        s_marginals,
        region,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_round_trip() {
        for s in ["qsi_sur", "qsi_sur:variance", "qsi_sur:entropy", "random", "max_misclass", "joint_sur"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        assert!("qsi_sur:nope".parse::<Strategy>().is_err());
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn defaults_follow_the_published_table() {
        let c = RunConfig::for_problem("f1", Strategy::QsiSur(MeasureKind::Misclassification)).unwrap();
        assert_eq!((c.n0, c.criterion.n_x, c.criterion.n_s, c.criterion.n_pi), (20, 500, 100, 15));
        assert_eq!((c.criterion.n_c, c.criterion.n_nodes, c.criterion.m_paths), (200, 15, 250));
        let c = RunConfig::for_problem("f3", Strategy::Baseline(BaselineKind::Random)).unwrap();
        assert_eq!((c.n0, c.criterion.n_x, c.criterion.n_s, c.criterion.n_pi), (40, 1000, 25, 60));
    }

    #[test]
    fn parse_overrides_and_round_trips() {
        let text = "# demo\nproblem = f2\nstrategy = qsi_sur:entropy\nbudget = 3 # short\nseed=9\nM = 40\nrepetitions = 2\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.budget, 3);
        assert_eq!(c.seed, 9);
        assert_eq!(c.criterion.m_paths, 40);
        assert_eq!(c.criterion_config().kind, MeasureKind::Entropy);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors() {
        assert!(RunConfig::parse("strategy = random").is_err());
        assert!(RunConfig::parse("problem = f1\nstrategy = random\nbudget = -1").is_err());
        assert!(RunConfig::parse("problem = f1\nstrategy = random\nwhat = 1").is_err());
        assert!(RunConfig::parse("problem = f1\nstrategy = random\nn0 = 1").is_err());
        assert!(RunConfig::parse("problem = f1\nstrategy = random\nno equals sign").is_err());
        assert!(RunConfig::parse("problem = sim\nstrategy = random").is_err());
    }

    #[test]
    fn custom_problem_round_trip() {
        let text = "problem = mock\nstrategy = random\ncommand = perl -lane 'BEGIN { $| = 1 } print $F[0] + $F[1]'\n\
                    x_lower = 0\nx_upper = 1\ns_marginals = beta(2,2,0,1)\nthreshold = 0.9\n\
                    orientation = above\nalpha = 0.5\n";
        let c = RunConfig::parse(text).unwrap();
        let custom = c.custom.as_ref().unwrap();
        assert_eq!(custom.region, CriticalRegion::above(0.9));
        assert_eq!(c.n0, 20);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        let p = c.build_problem().unwrap();
        assert_eq!(p.evaluate(&[0.25, 0.5]).unwrap(), 0.75);
    }
}
