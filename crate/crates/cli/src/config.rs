//! Sectioned `key = value` experiment configuration.
//!
//! [`ExperimentConfig::to_text`] writes every key with its documentation and
//! [`ExperimentConfig::parse`] reads it back to an equal value, so the
//! `config.resolved` file in each output directory reruns the experiment.

use std::fmt;
use std::path::PathBuf;

use palab::stats::{Observable, Rect};
use palab::surface::Rational;
use palab::{Profile, ReferenceModel, SlowdownParams};

/// Bad configuration text, key or value. Maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub matrix: [[i64; 2]; 2],
    pub branch_points: [[Rational; 2]; 2],
    pub p: u32,
    pub alpha: f64,
    pub mu: f64,
    pub rho0: f64,
    /// `None` picks the largest admissible value, `r1 = r0 / lambda`.
    pub rho1: Option<f64>,
    pub a_star: f64,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub model: ModelConfig,

    pub local_points: usize,
    pub local_area_points: usize,

    pub crossings: usize,
    pub min_ratio: f64,
    pub pairs: usize,
    pub segments: usize,
    pub control_segments: usize,
    pub entry_length: f64,
    pub min_q: f64,

    pub tail_rect: Rect,
    pub tail_n_max: usize,
    pub tail_samples: usize,
    pub tail_control_samples: usize,

    pub sojourn_samples: usize,
    pub sojourn_cap: usize,

    pub corr_observable: Observable,
    pub corr_n_max: usize,
    pub corr_orbit_len: usize,
    pub corr_orbits: usize,

    pub clt_observable: Observable,
    pub clt_n: usize,
    pub clt_samples: usize,

    pub ldp_observable: Observable,
    pub ldp_eps: f64,
    pub ldp_n_min: usize,
    pub ldp_n_max: usize,
    pub ldp_per_decade: usize,
    pub ldp_samples: usize,

    pub lyapunov_steps: usize,
    pub lyapunov_start: [f64; 2],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = SlowdownParams::reference();
        Self {
            name: "lab".into(),
            seed: 1,
            out: PathBuf::from("pa-lab-out"),
            workers: 0,
            model: ModelConfig {
                matrix: [[3, 2], [1, 1]],
                branch_points: [[Rational::new(0, 1), Rational::new(0, 1)], [Rational::new(0, 1), Rational::new(1, 2)]],
                p: p.p,
                alpha: p.alpha,
                mu: p.mu,
                rho0: p.rho0,
                rho1: None,
                a_star: p.a_star,
                profile: Profile::Slowed,
            },
            local_points: 10_000,
            local_area_points: 2000,
            crossings: 1000,
            min_ratio: 1e-3,
            pairs: 1000,
            segments: 1000,
            control_segments: 200,
            entry_length: 1e-8,
            min_q: 1e-6,
            tail_rect: Rect::reference(),
            tail_n_max: 100_000,
            tail_samples: 1_000_000,
            tail_control_samples: 200_000,
            sojourn_samples: 10_000,
            sojourn_cap: 100_000,
            corr_observable: Observable::Bump { center: [0.5, 0.25], radius: 0.1 },
            corr_n_max: 1000,
            corr_orbit_len: 100_000,
            corr_orbits: 1000,
            clt_observable: Observable::Trig { kx: 1, ky: 0, phase: 0.0 },
            clt_n: 10_000,
            clt_samples: 10_000,
            ldp_observable: Observable::Trig { kx: 1, ky: 0, phase: 0.0 },
            ldp_eps: 0.055,
            ldp_n_min: 100,
            ldp_n_max: 1000,
            ldp_per_decade: 10,
            ldp_samples: 10_000,
            lyapunov_steps: 1_000_000,
            lyapunov_start: [0.1234, 0.5678],
        }
    }
}

/// One documented key. `get` renders the value, `set` parses it in place.
struct Key {
    section: &'static str,
    key: &'static str,
    doc: &'static str,
    get: fn(&ExperimentConfig) -> String,
    set: fn(&mut ExperimentConfig, &str) -> Res<()>,
}

fn num<T: std::str::FromStr>(v: &str) -> Res<T> {
    v.trim().parse().or_else(|_| err(format!("cannot parse {v:?}")))
}

fn floats<const N: usize>(v: &str) -> Res<[f64; N]> {
    let parts: Vec<f64> = v.split_whitespace().map(num).collect::<Res<_>>()?;
    parts.try_into().or_else(|_| err(format!("expected {N} numbers, got {v:?}")))
}

fn rational(t: &str) -> Res<Rational> {
    let (n, d) = t.split_once('/').unwrap_or((t, "1"));
    let (n, d) = (num(n)?, num(d)?);
    if d <= 0 {
        return err(format!("denominator must be positive in {t}"));
    }
    Ok(Rational::new(n, d))
}

fn point(v: &str) -> Res<[Rational; 2]> {
    match v.split_whitespace().collect::<Vec<_>>()[..] {
        [a, b] => Ok([rational(a)?, rational(b)?]),
        _ => err(format!("expected two rationals, got {v:?}")),
    }
}

fn show_point(b: &[Rational; 2]) -> String {
    format!("{}/{} {}/{}", b[0].num, b[0].den, b[1].num, b[1].den)
}

/// Observable syntax: `bump X Y R`, `trig KX KY PHASE`, `taper R`,
/// `const C`, or `cob <observable>` for the coboundary `v o g - v`.
pub fn parse_observable(v: &str) -> Res<Observable> {
    let v = v.trim();
    let (head, rest) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
    let rest = rest.trim();
    let nums = || -> Res<Vec<f64>> { rest.split_whitespace().map(num).collect() };
    Ok(match (head, nums()) {
        ("bump", Ok(n)) if n.len() == 3 && n[2] > 0.0 => Observable::Bump { center: [n[0], n[1]], radius: n[2] },
        ("trig", _) => match rest.split_whitespace().collect::<Vec<_>>()[..] {
            [kx, ky, phase] => Observable::Trig { kx: num(kx)?, ky: num(ky)?, phase: num(phase)? },
            _ => return err(format!("trig needs KX KY PHASE, got {v:?}")),
        },
        ("taper", Ok(n)) if n.len() == 1 && n[0] > 0.0 => Observable::Taper { radius: n[0] },
        ("const", Ok(n)) if n.len() == 1 => Observable::Constant(n[0]),
        ("cob", _) => Observable::Coboundary(Box::new(parse_observable(rest)?)),
        _ => return err(format!("unknown observable {v:?}")),
    })
}

pub fn show_observable(o: &Observable) -> String {
    match o {
        Observable::Bump { center, radius } => format!("bump {:?} {:?} {radius:?}", center[0], center[1]),
        Observable::Trig { kx, ky, phase } => format!("trig {kx} {ky} {phase:?}"),
        Observable::Taper { radius } => format!("taper {radius:?}"),
        Observable::Constant(c) => format!("const {c:?}"),
        Observable::Coboundary(v) => format!("cob {}", show_observable(v)),
    }
}

macro_rules! key {
    ($section:literal, $key:literal, $doc:literal, $field:ident $(. $sub:ident)*) => {
        Key {
            section: $section,
            key: $key,
            doc: $doc,
            get: |c| format!("{:?}", c.$field $(.$sub)*),
            set: |c, v| {
                c.$field $(.$sub)* = num(v)?;
                Ok(())
            },
        }
    };
}

fn keys() -> Vec<Key> {
    vec![
        Key {
            section: "run",
            key: "name",
            doc: "Experiment name, echoed in the summary.",
            get: |c| c.name.clone(),
            set: |c, v| {
                c.name = v.trim().to_string();
                Ok(())
            },
        },
        key!("run", "seed", "Root seed; every work item draws its own ChaCha8 stream from it.", seed),
        Key {
            section: "run",
            key: "out",
            doc: "Output directory.",
            get: |c| c.out.display().to_string(),
            set: |c, v| {
                if v.trim().is_empty() {
                    return err("out must not be empty");
                }
                c.out = PathBuf::from(v.trim());
                Ok(())
            },
        },
        key!("run", "workers", "Worker threads; 0 uses every core. Results depend on seed and worker count only.", workers),
        Key {
            section: "model",
            key: "matrix",
            doc: "Hyperbolic SL(2, Z) matrix a b c d of the torus map.",
            get: |c| {
                let m = c.model.matrix;
                format!("{} {} {} {}", m[0][0], m[0][1], m[1][0], m[1][1])
            },
            set: |c, v| {
                let e: Vec<i64> = v.split_whitespace().map(num).collect::<Res<_>>()?;
                let [a, b, cc, d] = e[..] else {
                    return err("matrix needs four integers");
                };
                c.model.matrix = [[a, b], [cc, d]];
                Ok(())
            },
        },
        Key {
            section: "model",
            key: "branch_point.0",
            doc: "First branch point as two rationals in torus coordinates.",
            get: |c| show_point(&c.model.branch_points[0]),
            set: |c, v| {
                c.model.branch_points[0] = point(v)?;
                Ok(())
            },
        },
        Key {
            section: "model",
            key: "branch_point.1",
            doc: "Second branch point.",
            get: |c| show_point(&c.model.branch_points[1]),
            set: |c, v| {
                c.model.branch_points[1] = point(v)?;
                Ok(())
            },
        },
        key!("model", "p", "Prongs per singularity; the double cover needs 4.", model.p),
        key!("model", "alpha", "Slow-down exponent in (0, 1).", model.alpha),
        key!("model", "mu", "Cone parameter in (0, 1/2).", model.mu),
        key!("model", "rho0", "Outer chart radius of the slowed region.", model.rho0),
        Key {
            section: "model",
            key: "rho1",
            doc: "Inner chart radius of the pure power law; max means r1 = r0 / lambda.",
            get: |c| c.model.rho1.map_or("max".into(), |r| format!("{r:?}")),
            set: |c, v| {
                c.model.rho1 = if v.trim() == "max" { None } else { Some(num(v)?) };
                Ok(())
            },
        },
        key!("model", "a_star", "Chart radius around each singularity.", model.a_star),
        Key {
            section: "model",
            key: "profile",
            doc: "slowed, or linear for the control run without slow-down.",
            get: |c| if c.model.profile == Profile::Linear { "linear".into() } else { "slowed".into() },
            set: |c, v| {
                c.model.profile = match v.trim() {
                    "slowed" => Profile::Slowed,
                    "linear" => Profile::Linear,
                    other => return err(format!("unknown profile {other:?}")),
                };
                Ok(())
            },
        },
        key!("verify-local", "points", "Random plane points for the flow identities.", local_points),
        key!("verify-local", "area_points", "Random chart points for the area invariance check.", local_area_points),
        key!("verify-lemmas", "crossings", "Random crossings of the inner disk for the s1/s2 bounds.", crossings),
        key!("verify-lemmas", "min_ratio", "Smallest |s1/s2| at entry of a random crossing.", min_ratio),
        key!("verify-lemmas", "pairs", "Nearby pairs for the spread envelopes, per population.", pairs),
        key!("verify-lemmas", "segments", "Stable segments for the length sandwich.", segments),
        key!("verify-lemmas", "control_segments", "Segments in the control run without slow-down.", control_segments),
        key!("verify-lemmas", "entry_length", "Flat length of a segment when it enters the chart disk.", entry_length),
        key!("verify-lemmas", "min_q", "Smallest seed offset ratio; smaller means deeper passages.", min_q),
        Key {
            section: "tail",
            key: "center",
            doc: "Centre of the square return set in torus coordinates.",
            get: |c| format!("{:?} {:?}", c.tail_rect.center[0], c.tail_rect.center[1]),
            set: |c, v| {
                c.tail_rect.center = floats(v)?;
                Ok(())
            },
        },
        key!("tail", "half_side", "Half side of the return set.", tail_rect.half_side),
        key!("tail", "n_max", "Return times are censored at this many steps.", tail_n_max),
        key!("tail", "samples", "Starting points in the return set.", tail_samples),
        key!("tail", "control_samples", "Starting points for the control run; 0 skips it.", tail_control_samples),
        key!("sojourn", "samples", "Visits to the singular neighbourhood.", sojourn_samples),
        key!("sojourn", "cap", "Visits longer than this are censored.", sojourn_cap),
        Key {
            section: "corr",
            key: "observable",
            doc: "bump X Y R | trig KX KY PHASE | taper R | const C | cob <observable>.",
            get: |c| show_observable(&c.corr_observable),
            set: |c, v| {
                c.corr_observable = parse_observable(v)?;
                Ok(())
            },
        },
        key!("corr", "n_max", "Largest lag.", corr_n_max),
        key!("corr", "orbit_len", "Steps per orbit; at least 100 n_max.", corr_orbit_len),
        key!("corr", "orbits", "Independent orbits.", corr_orbits),
        Key {
            section: "clt",
            key: "observable",
            doc: "Observable whose Birkhoff sums are tested.",
            get: |c| show_observable(&c.clt_observable),
            set: |c, v| {
                c.clt_observable = parse_observable(v)?;
                Ok(())
            },
        },
        key!("clt", "n", "Steps per Birkhoff sum.", clt_n),
        key!("clt", "samples", "Independent sums.", clt_samples),
        Key {
            section: "ldp",
            key: "observable",
            doc: "Observable whose Birkhoff averages are tested.",
            get: |c| show_observable(&c.ldp_observable),
            set: |c, v| {
                c.ldp_observable = parse_observable(v)?;
                Ok(())
            },
        },
        key!("ldp", "eps", "Deviation threshold for the averages.", ldp_eps),
        key!("ldp", "n_min", "Smallest averaging length.", ldp_n_min),
        key!("ldp", "n_max", "Largest averaging length.", ldp_n_max),
        key!("ldp", "per_decade", "Grid points per decade of n.", ldp_per_decade),
        key!("ldp", "samples", "Orbits per grid point.", ldp_samples),
        key!("lyapunov", "steps", "Steps of the cocycle product.", lyapunov_steps),
        Key {
            section: "lyapunov",
            key: "start",
            doc: "Starting point in torus coordinates.",
            get: |c| format!("{:?} {:?}", c.lyapunov_start[0], c.lyapunov_start[1]),
            set: |c, v| {
                c.lyapunov_start = floats(v)?;
                Ok(())
            },
        },
    ]
}

impl ExperimentConfig {
    /// Reads a config file over the defaults. Keys not mentioned keep their
    /// default value.
    pub fn parse(text: &str) -> Res<Self> {
        let mut cfg = Self::default();
        let table = keys();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !table.iter().any(|k| k.section == section) {
                    return err(format!("line {}: unknown section [{section}]", i + 1));
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected key = value", i + 1));
            };
            let Some(key) = table.iter().find(|e| e.section == section && e.key == k.trim()) else {
                return err(format!("line {}: unknown key {:?} in [{section}]", i + 1, k.trim()));
            };
            (key.set)(&mut cfg, v.trim()).map_err(|e| ConfigError(format!("line {}: {}: {}", i + 1, k.trim(), e.0)))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override. The key is `section.key`, or a bare
    /// key when only one section has it.
    pub fn set_override(&mut self, assignment: &str) -> Res<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return err(format!("override {assignment:?} is not key=value"));
        };
        let k = k.trim();
        let table = keys();
        let hits: Vec<&Key> = table
            .iter()
            .filter(|e| k.strip_prefix(e.section).and_then(|r| r.strip_prefix('.')) == Some(e.key) || e.key == k)
            .collect();
        let exact: Vec<&&Key> = hits.iter().filter(|e| k.starts_with(&format!("{}.", e.section))).collect();
        let key = match (exact.as_slice(), hits.as_slice()) {
            ([one], _) => **one,
            (_, [one]) => *one,
            (_, []) => return err(format!("unknown key {k:?}")),
            _ => return err(format!("key {k:?} is ambiguous; prefix it with its section")),
        };
        (key.set)(self, v.trim()).map_err(|e| ConfigError(format!("{k}: {}", e.0)))
    }

    /// Full config with every key and its documentation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in keys() {
            if k.section != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = k.section;
                out.push_str(&format!("[{section}]\n"));
            }
            out.push_str(&format!("# {}\n{} = {}\n", k.doc, k.key, (k.get)(self)));
        }
        out
    }

    pub fn params(&self) -> Res<SlowdownParams> {
        let m = &self.model;
        let [[a, _], [_, d]] = m.matrix;
        let tr = (a + d) as f64;
        if tr <= 2.0 {
            return err("matrix trace must exceed 2");
        }
        let lambda = 0.5 * (tr + (tr * tr - 4.0).sqrt());
        let params = match m.rho1 {
            Some(rho1) => SlowdownParams::new(m.p, m.alpha, lambda, m.rho0, rho1, m.a_star, m.mu),
            None => SlowdownParams::with_max_rho1(m.p, m.alpha, lambda, m.rho0, m.a_star, m.mu),
        };
        params.map(|p| p.with_profile(m.profile)).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn model(&self) -> Res<ReferenceModel> {
        ReferenceModel::new(self.model.matrix, self.model.branch_points, &self.params()?, self.seed).map_err(|e| ConfigError(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn edited_config_round_trips() {
        let mut c = ExperimentConfig::default();
        for o in ["alpha=0.1234567890123", "rho1=0.0123", "corr.observable=cob trig 2 -1 0.3", "profile=linear", "tail.center=0.4 0.3", "seed=18446744073709551615"] {
            c.set_override(o).unwrap();
        }
        assert_eq!(c.model.alpha, 0.1234567890123);
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn ambiguous_and_unknown_keys() {
        let mut c = ExperimentConfig::default();
        assert!(c.set_override("samples=10").is_err());
        assert!(c.set_override("nope=1").is_err());
        c.set_override("clt.samples=10").unwrap();
        assert_eq!(c.clt_samples, 10);
        c.set_override("ldp.n_max=2000").unwrap();
        assert_eq!(c.ldp_n_max, 2000);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = ExperimentConfig::parse("[model]\nalpha = x\n").unwrap_err();
        assert!(e.0.contains("line 2"), "{}", e.0);
        assert!(ExperimentConfig::parse("[nowhere]\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nalpha\n").is_err());
    }

    #[test]
    fn observables_parse() {
        for s in ["bump 0.5 0.25 0.1", "trig 1 0 0.0", "taper 0.2", "const 1.0", "cob cob bump 0.1 0.2 0.05"] {
            let o = parse_observable(s).unwrap();
            assert_eq!(parse_observable(&show_observable(&o)).unwrap(), o);
        }
        assert!(parse_observable("bump 1 2").is_err());
        assert!(parse_observable("wave 1").is_err());
    }

    #[test]
    fn default_model_is_the_reference() {
        let c = ExperimentConfig::default();
        assert_eq!(c.params().unwrap(), SlowdownParams::reference());
    }
}
