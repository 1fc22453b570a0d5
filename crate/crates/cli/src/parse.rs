//! Problem, method and initial-guess strings accepted on the command line.
//!
//! Problems: `circulant:N`, `block:ELL,Q`, `laplacian:N`, `identity:N`,
//! `file:PATH`, `spd:n=N,lo=A,hi=B[,seed=S]`,
//! `diag:n=N,lo=A,hi=B,eigcond=K[,seed=S]`, `general:n=N[,seed=S]`.
//!
//! Methods: `fixed-point`, `ngmres:m=M`, `angmres:m=M,p=P`, `gmres`,
//! `gmres:restart=R`; `M` may be `inf`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;
use ngmres_core::angmres::{run_angmres_with, AlternatingSchedule};
use ngmres_core::gmres::{run_gmres_full, run_gmres_restarted};
use ngmres_core::iterate::run_fixed_point;
use ngmres_core::ngmres::{run_ngmres_with, Parametrization};
use ngmres_core::problems::{ProblemKind, ProblemSpec, U0Policy};
use ngmres_core::{Capacity, ConvergenceHistory, FixedPointMap, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedPoint,
    Ngmres(Capacity),
    Angmres { m: Capacity, p: usize },
    GmresFull,
    GmresRestarted(usize),
}

impl Method {
    pub fn run(
        &self,
        map: &FixedPointMap,
        u0: &DVector<f64>,
        cfg: &RunConfig,
        form: Parametrization,
    ) -> ngmres_core::Result<ConvergenceHistory> {
        match *self {
            Method::FixedPoint => run_fixed_point(map, u0, cfg),
            Method::Ngmres(m) => run_ngmres_with(map, u0, m, cfg, form),
            Method::Angmres { m, p } => run_angmres_with(map, u0, AlternatingSchedule::new(m, p)?, cfg, form),
            Method::GmresFull => run_gmres_full(map, u0, cfg).map(|r| r.history),
            Method::GmresRestarted(k) => run_gmres_restarted(map, u0, k, cfg),
        }
    }

    /// File-name friendly identifier, e.g. `angmres_inf_4`.
    pub fn slug(&self) -> String {
        match self {
            Method::FixedPoint => "fixed_point".into(),
            Method::Ngmres(m) => format!("ngmres_{m}"),
            Method::Angmres { m, p } => format!("angmres_{m}_{p}"),
            Method::GmresFull => "gmres".into(),
            Method::GmresRestarted(k) => format!("gmres_{k}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::FixedPoint => f.write_str("fixed-point"),
            Method::Ngmres(m) => write!(f, "NGMRES({})", cap_label(*m)),
            Method::Angmres { m, p } => write!(f, "aNGMRES({},{p})", cap_label(*m)),
            Method::GmresFull => f.write_str("GMRES"),
            Method::GmresRestarted(k) => write!(f, "GMRES({k})"),
        }
    }
}

fn cap_label(m: Capacity) -> String {
    match m {
        Capacity::Finite(m) => m.to_string(),
        Capacity::Unbounded => "∞".into(),
    }
}

fn split_head(s: &str) -> (&str, &str) {
    match s.split_once(':') {
        Some((h, t)) => (h.trim(), t.trim()),
        None => (s.trim(), ""),
    }
}

/// `key=value` pairs separated by commas.
fn key_values(args: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, got '{part}'"))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            bail!("duplicate key '{}'", k.trim());
        }
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(kv: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match kv.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| anyhow!("invalid value '{v}' for '{key}': {e}")),
    }
}

fn require<T: std::str::FromStr>(kv: &mut BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    take(kv, key)?.ok_or_else(|| anyhow!("missing '{key}'"))
}

fn finish(kv: BTreeMap<String, String>) -> Result<()> {
    if let Some(k) = kv.keys().next() {
        bail!("unknown key '{k}'");
    }
    Ok(())
}

pub fn parse_capacity(s: &str) -> Result<Capacity> {
    match s.trim() {
        "inf" | "∞" | "unbounded" => Ok(Capacity::Unbounded),
        v => Ok(Capacity::Finite(
            v.parse().with_context(|| format!("invalid depth '{v}'"))?,
        )),
    }
}

fn positive(s: &str, what: &str) -> Result<usize> {
    let v: usize = s.trim().parse().with_context(|| format!("invalid {what} '{s}'"))?;
    if v == 0 {
        bail!("{what} must be positive");
    }
    Ok(v)
}

/// Parses a problem string; `seed` fills in omitted seeds of random kinds.
pub fn parse_problem(s: &str, seed: u64) -> Result<ProblemKind> {
    let (head, args) = split_head(s);
    let kind = match head {
        "circulant" => ProblemKind::CirculantShift(positive(args, "size")?),
        "identity" => ProblemKind::Identity(positive(args, "size")?),
        "laplacian" => ProblemKind::Laplacian2D(positive(args, "grid size")?),
        "block" => {
            let (ell, q) = args
                .split_once(',')
                .ok_or_else(|| anyhow!("block expects 'block:ELL,Q'"))?;
            ProblemKind::BlockShift {
                ell: positive(ell, "block width")?,
                q: positive(q, "block count")?,
            }
        }
        "file" => {
            if args.is_empty() {
                bail!("file expects 'file:PATH'");
            }
            ProblemKind::FromFile(PathBuf::from(args))
        }
        "spd" => {
            let mut kv = key_values(args)?;
            let k = ProblemKind::RandomSpd {
                n: require(&mut kv, "n")?,
                spectrum: (require(&mut kv, "lo")?, require(&mut kv, "hi")?),
                seed: take(&mut kv, "seed")?.unwrap_or(seed),
            };
            finish(kv)?;
            k
        }
        "diag" => {
            let mut kv = key_values(args)?;
            let k = ProblemKind::RandomDiagonalizable {
                n: require(&mut kv, "n")?,
                spectrum: (require(&mut kv, "lo")?, require(&mut kv, "hi")?),
                eigcond: take(&mut kv, "eigcond")?.unwrap_or(1.0),
                seed: take(&mut kv, "seed")?.unwrap_or(seed),
            };
            finish(kv)?;
            k
        }
        "general" => {
            let mut kv = key_values(args)?;
            let k = ProblemKind::RandomGeneral {
                n: require(&mut kv, "n")?,
                seed: take(&mut kv, "seed")?.unwrap_or(seed),
            };
            finish(kv)?;
            k
        }
        other => bail!("unknown problem kind '{other}'"),
    };
    Ok(kind)
}

pub fn parse_method(s: &str) -> Result<Method> {
    let (head, args) = split_head(s);
    let mut kv = key_values(args)?;
    let method = match head {
        "fixed-point" | "richardson" => Method::FixedPoint,
        "ngmres" => Method::Ngmres(parse_capacity(&require::<String>(&mut kv, "m")?)?),
        "angmres" => {
            let m = parse_capacity(&require::<String>(&mut kv, "m")?)?;
            let p: usize = require(&mut kv, "p")?;
            if p == 0 {
                bail!("period p must be at least 1");
            }
            Method::Angmres { m, p }
        }
        "gmres" => match take::<usize>(&mut kv, "restart")? {
            None => Method::GmresFull,
            Some(0) => bail!("restart must be positive"),
            Some(k) => Method::GmresRestarted(k),
        },
        other => bail!("unknown method '{other}'"),
    };
    finish(kv)?;
    Ok(method)
}

/// `ones`, `zero`, `random` (uses `seed`) or `random:S`.
pub fn parse_u0(s: &str, seed: u64) -> Result<U0Policy> {
    let (head, args) = split_head(s);
    match head {
        "ones" => Ok(U0Policy::Ones),
        "zero" | "zeros" => Ok(U0Policy::Zero),
        "random" if args.is_empty() => Ok(U0Policy::RandomSeeded(seed)),
        "random" => Ok(U0Policy::RandomSeeded(
            args.parse().with_context(|| format!("invalid seed '{args}'"))?,
        )),
        other => bail!("unknown initial guess '{other}'"),
    }
}

/// Problem spec with the experiment-default initial guess; seeded random
/// guesses take the CLI seed.
pub fn default_spec(kind: ProblemKind, seed: u64) -> ProblemSpec {
    let mut spec = ProblemSpec::with_default_u0(kind);
    if let (ProblemKind::Laplacian2D(_), U0Policy::RandomSeeded(_)) = (&spec.kind, spec.u0) {
        spec.u0 = U0Policy::RandomSeeded(seed);
    }
    spec
}

pub fn parse_form(s: &str) -> Result<Parametrization> {
    match s {
        "beta" => Ok(Parametrization::Beta),
        "gamma" => Ok(Parametrization::Gamma),
        other => bail!("unknown parametrization '{other}' (expected beta or gamma)"),
    }
}
