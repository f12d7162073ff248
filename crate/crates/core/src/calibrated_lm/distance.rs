use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Var};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    pub margin: f64,
    pub norm_p: u32,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: 1.0,
            norm_p: 2,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::Config(format!("triplet margin must be >= 0, got {}", self.margin)));
        }
        if self.norm_p < 1 {
            return Err(Error::Config("triplet norm_p must be >= 1".into()));
        }
        Ok(())
    }
}

/// Distance between two paired representations, recorded on a graph.
///
/// Inputs are `1 x d` rows. The result is `1 x 1`.
pub trait ConfusionDistance: Send + Sync {
    fn name(&self) -> &str;

    fn needs_negative(&self) -> bool {
        false
    }

    fn distance(&self, g: &mut Graph, a: Var, b: Var, negative: Option<Var>) -> Var;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Mse;

impl ConfusionDistance for Mse {
    fn name(&self) -> &str {
        "mse"
    }

    fn distance(&self, g: &mut Graph, a: Var, b: Var, _: Option<Var>) -> Var {
        let d = g.sub(a, b);
        let sq = g.square(d);
        g.mean(sq)
    }
}

/// `1 - cos(a, b)`
#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine;

impl ConfusionDistance for Cosine {
    fn name(&self) -> &str {
        "cosine"
    }

    fn distance(&self, g: &mut Graph, a: Var, b: Var, _: Option<Var>) -> Var {
        let ab = g.mul(a, b);
        let dot = g.sum(ab);
        let aa = g.square(a);
        let na = g.sum(aa);
        let bb = g.square(b);
        let nb = g.sum(bb);
        let prod = g.mul(na, nb);
        let mut denom = g.sqrt(prod);
        if g.scalar(denom) < NORM_EPS {
            denom = g.add_scalar(denom, NORM_EPS);
        }
        let cos = g.div(dot, denom);
        let neg = g.scale(cos, -1.0);
        g.add_scalar(neg, 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct L1;

impl ConfusionDistance for L1 {
    fn name(&self) -> &str {
        "l1"
    }

    fn distance(&self, g: &mut Graph, a: Var, b: Var, _: Option<Var>) -> Var {
        let d = g.sub(a, b);
        let abs = g.abs(d);
        g.sum(abs)
    }
}

/// `max(d(a, p) - d(a, n) + margin, 0)` with `d` the p-norm of the difference.
///
/// Without a negative the term is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Triplet {
    pub config: TripletConfig,
}

impl Triplet {
    fn norm(&self, g: &mut Graph, x: Var, y: Var) -> Var {
        let p = self.config.norm_p as f64;
        let d = g.sub(x, y);
        let pw = g.pow_abs(d, p);
        let s = g.sum(pw);
        let s = g.add_scalar(s, NORM_EPS);
        g.pow_abs(s, 1.0 / p)
    }
}

impl ConfusionDistance for Triplet {
    fn name(&self) -> &str {
        "triplet"
    }

    fn needs_negative(&self) -> bool {
        true
    }

    fn distance(&self, g: &mut Graph, a: Var, b: Var, negative: Option<Var>) -> Var {
        let Some(n) = negative else {
            return g.scalar_const(0.0);
        };
        let dp = self.norm(g, a, b);
        let dn = self.norm(g, a, n);
        let diff = g.sub(dp, dn);
        let shifted = g.add_scalar(diff, self.config.margin);
        g.relu(shifted)
    }
}

/// Settings a distance constructor may read.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistanceOptions {
    pub triplet: TripletConfig,
}

type DistanceCtor = fn(&DistanceOptions) -> Box<dyn ConfusionDistance>;

/// Named constructors for confusion distances.
pub struct DistanceRegistry {
    ctors: BTreeMap<String, DistanceCtor>,
}

impl DistanceRegistry {
    pub fn empty() -> Self {
        DistanceRegistry { ctors: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("mse", |_| Box::new(Mse));
        r.register("cosine", |_| Box::new(Cosine));
        r.register("l1", |_| Box::new(L1));
        r.register("triplet", |o| Box::new(Triplet { config: o.triplet }));
        r
    }

    pub fn register(&mut self, name: &str, ctor: DistanceCtor) {
        self.ctors.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> Vec<&str> {
        self.ctors.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, options: &DistanceOptions) -> Result<Box<dyn ConfusionDistance>> {
        let ctor = self.ctors.get(name).ok_or_else(|| {
            Error::Config(format!("unknown distance {name:?}; expected one of {:?}", self.names()))
        })?;
        Ok(ctor(options))
    }
}

impl Default for DistanceRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
