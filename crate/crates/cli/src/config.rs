//! Problem configuration: one TOML document describes a full study — mesh,
//! boundary roles, material, the network, loss form, data sources, and the
//! training schedule. Parsing is strict (unknown keys are rejected) and
//! `validate` front-loads every check that does not need the mesh, so a bad
//! config dies with a usage error before any heavy work starts.
//!
//! Values that vary over the boundary are written as expressions over
//! `x1`, `x2` (and `t` for drive signals), e.g. `"0.5 + sin(2*pi*x1)"`.
//! Facet predicates use the same grammar: `"x2 == 0"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use finpinn_core::encoder::{Analytic1d, BasisKind, MassKind, RbfMass};
use finpinn_core::expr;
use finpinn_core::losses::{Law, ObsKind, Plane};
use finpinn_core::model::ModelSpec;
use finpinn_core::trainer::TrainConfig;
use finpinn_core::autodiff::net::Activation;
use finpinn_core::{Error, LossWeights, Material, QuadRule, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// Variational energy minimization (2D static).
    Weak,
    /// Pointwise equilibrium residuals (2D static).
    Strong,
    /// Space-time residual of the 1D bar equation.
    Dynamic,
}

impl Form {
    pub fn name(self) -> &'static str {
        match self {
            Form::Weak => "weak",
            Form::Strong => "strong",
            Form::Dynamic => "dynamic",
        }
    }
}

/// Interior quadrature choice; `auto` picks by form (3-point Gauss for the
/// energy integral, centroids for pointwise residuals).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    #[default]
    Auto,
    Centroid,
    Gauss3,
}

impl Quadrature {
    pub fn rule(self, form: Form) -> QuadRule {
        match self {
            Quadrature::Centroid => QuadRule::Centroid,
            Quadrature::Gauss3 => QuadRule::Gauss(3),
            Quadrature::Auto => match form {
                Form::Weak => QuadRule::Gauss(3),
                Form::Strong | Form::Dynamic => QuadRule::Centroid,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshRef {
    /// Path relative to the config file's directory.
    pub path: String,
    #[serde(default)]
    pub format: MeshFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    /// Sniff from the first line.
    #[default]
    Auto,
    Native,
    Gmsh,
}

/// Re-tags boundary facets whose vertices all satisfy the predicate.
/// Applied in order after the mesh file's own tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagRule {
    pub name: String,
    #[serde(rename = "where")]
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub e0: f64,
    pub nu: f64,
    #[serde(default)]
    pub plane: PlaneChoice,
    /// Strain-quadratic stiffening coefficient; 0 keeps the law linear.
    #[serde(default)]
    pub beta: f64,
    /// Thermal expansion coefficient.
    #[serde(default)]
    pub alpha_t: f64,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default)]
    pub damping: f64,
    #[serde(default = "one")]
    pub stiffness: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneChoice {
    #[default]
    Stress,
    Strain,
}

impl MaterialConfig {
    pub fn material(&self) -> Material {
        Material {
            e0: self.e0,
            nu: self.nu,
            plane: match self.plane {
                PlaneChoice::Stress => Plane::Stress,
                PlaneChoice::Strain => Plane::Strain,
            },
            law: if self.beta > 0.0 {
                Law::Nonlinear { beta: self.beta }
            } else {
                Law::Linear
            },
            alpha_t: self.alpha_t,
            rho: self.rho,
            damping: self.damping,
            stiffness: self.stiffness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    /// Modes to compute (and to expect when loading).
    pub n: usize,
    #[serde(default)]
    pub kind: BasisKindChoice,
    #[serde(default)]
    pub mass: MassChoice,
    /// Where the encoded basis artifact lives; `encode` writes it, `solve`
    /// reads it. Models that use no modes may omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Closed-form 1D family (analytic kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantChoice>,
    /// Multiquadric shape parameter (rbf kind only; default is picked from
    /// the center spacing).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKindChoice {
    #[default]
    Homogeneous,
    Specific,
    Hybrid,
    Analytic,
    Rbf,
}

impl BasisKindChoice {
    pub fn kind(self) -> BasisKind {
        match self {
            BasisKindChoice::Homogeneous => BasisKind::Homogeneous,
            BasisKindChoice::Specific => BasisKind::Specific,
            BasisKindChoice::Hybrid => BasisKind::Hybrid,
            BasisKindChoice::Analytic => BasisKind::Analytic,
            BasisKindChoice::Rbf => BasisKind::Rbf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassChoice {
    #[default]
    Consistent,
    Lumped,
    Identity,
}

impl MassChoice {
    pub fn mass(self) -> MassKind {
        match self {
            MassChoice::Consistent => MassKind::Consistent,
            MassChoice::Lumped => MassKind::Lumped,
            MassChoice::Identity => MassKind::Identity,
        }
    }

    pub fn rbf_mass(self) -> RbfMass {
        match self {
            MassChoice::Identity => RbfMass::Identity,
            _ => RbfMass::Gram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantChoice {
    FullNeumann,
    LeftDirichlet,
}

impl VariantChoice {
    pub fn variant(self) -> Analytic1d {
        match self {
            VariantChoice::FullNeumann => Analytic1d::FullNeumann,
            VariantChoice::LeftDirichlet => Analytic1d::LeftDirichlet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_u: usize,
    #[serde(default)]
    pub n_sigma: usize,
    #[serde(default = "yes")]
    pub include_x: bool,
    #[serde(default = "default_u_hidden")]
    pub u_hidden: Vec<usize>,
    #[serde(default = "default_sigma_hidden")]
    pub sigma_hidden: Vec<usize>,
    #[serde(default)]
    pub activation: ActivationChoice,
    /// Train the conventional coordinate network instead (ignores the mode
    /// counts and the basis file).
    #[serde(default)]
    pub baseline: bool,
}

fn yes() -> bool {
    true
}

fn default_u_hidden() -> Vec<usize> {
    vec![64, 64, 64, 64]
}

fn default_sigma_hidden() -> Vec<usize> {
    vec![64, 64]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationChoice {
    Tanh,
    #[default]
    Gelu,
    Sine,
}

impl ActivationChoice {
    pub fn activation(self) -> Activation {
        match self {
            ActivationChoice::Tanh => Activation::Tanh,
            ActivationChoice::Gelu => Activation::Gelu,
            ActivationChoice::Sine => Activation::Sine,
        }
    }
}

impl NetworkConfig {
    /// Model shape for a given spatial dimension and form.
    pub fn model_spec(&self, dim: usize, form: Form) -> ModelSpec {
        ModelSpec {
            dim,
            n_u: self.n_u,
            n_sigma: self.n_sigma,
            include_x: self.include_x,
            include_t: form == Form::Dynamic,
            u_hidden: self.u_hidden.clone(),
            sigma_hidden: self.sigma_hidden.clone(),
            activation: self.activation.activation(),
        }
    }
}

/// Prescribed displacement on tagged boundary stretches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletBc {
    pub tags: Vec<String>,
    /// One expression per displacement component.
    pub value: Vec<String>,
    /// Impose exactly through the output transform (default) or as a
    /// penalty term.
    #[serde(default = "yes")]
    pub hard: bool,
}

/// Prescribed traction on tagged boundary stretches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeumannBc {
    pub tags: Vec<String>,
    pub traction: Vec<String>,
}

/// Boundary stretches whose load is to be inferred, not imposed: the solver
/// gets no traction information there. A `neumann` block on the same tag is
/// used only by the oracle and the reconstruction metric — it is the ground
/// truth, hidden from the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnknownLoad {
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsConfig {
    /// Measurement file to load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Alternatively, sample measurements from the reference solution:
    /// `kind` + `n` pick this mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ObsKindChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Node-sampling seed for reference-derived measurements.
    #[serde(default)]
    pub seed: u64,
    /// Gaussian noise level relative to the per-component value scale.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsKindChoice {
    #[serde(rename = "u")]
    Displacement,
    #[serde(rename = "eps")]
    Strain,
}

impl ObsKindChoice {
    pub fn kind(self) -> ObsKind {
        match self {
            ObsKindChoice::Displacement => ObsKind::Displacement,
            ObsKindChoice::Strain => ObsKind::Strain,
        }
    }
}

/// Where the ground truth comes from: a nodal table on disk, or computed on
/// the spot by the matching classical solver (finite elements for static
/// problems, finite differences for the bar).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub compute: bool,
    /// Reference total potential, for energy comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

/// Space-time setup for the 1D bar (dynamic form only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicConfig {
    pub length: f64,
    pub duration: f64,
    /// Driven-end displacement signal, an expression in `t`.
    pub drive: String,
    /// Interior collocation lattice: `nx` spatial × `nt` temporal samples.
    pub nx: usize,
    pub nt: usize,
    /// Add the free-end strain penalty (needed by coordinate networks; the
    /// spectral model satisfies the condition by construction).
    #[serde(default)]
    pub free_bc_loss: bool,
    /// Spatial resolution of the finite-difference reference grid.
    #[serde(default = "default_oracle_nx")]
    pub oracle_nx: usize,
}

fn default_oracle_nx() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub lr: f64,
    pub epochs: usize,
    #[serde(default)]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default)]
    pub weights: WeightsBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    #[serde(default = "one")]
    pub data: f64,
    #[serde(default = "one")]
    pub dbc: f64,
    #[serde(default = "one")]
    pub nbc: f64,
    #[serde(default = "one")]
    pub pde: f64,
    #[serde(default = "one")]
    pub constitutive: f64,
    #[serde(default = "one")]
    pub ic: f64,
}

impl Default for WeightsBlock {
    fn default() -> WeightsBlock {
        WeightsBlock {
            data: 1.0,
            dbc: 1.0,
            nbc: 1.0,
            pde: 1.0,
            constitutive: 1.0,
            ic: 1.0,
        }
    }
}

impl TrainBlock {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            eval_every: self.eval_every,
            weights: LossWeights {
                data: self.weights.data,
                dbc: self.weights.dbc,
                nbc: self.weights.nbc,
                pde: self.weights.pde,
                constitutive: self.weights.constitutive,
                ic: self.weights.ic,
            },
        }
    }
}

/// Output file names, written into the run's output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub model: String,
    pub fields: String,
    pub history: String,
    pub metrics: String,
    /// Also write the displacement field as a VTK file when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vtk: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> OutputConfig {
        OutputConfig {
            model: "model.fpm".into(),
            fields: "fields.csv".into(),
            history: "history.csv".into(),
            metrics: "metrics.json".into(),
            vtk: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub form: Form,
    #[serde(default)]
    pub quadrature: Quadrature,
    /// Uniform temperature rise driving thermal eigenstrain.
    #[serde(default)]
    pub delta_t: f64,
    pub mesh: MeshRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tag: Vec<TagRule>,
    pub material: MaterialConfig,
    pub basis: BasisConfig,
    pub model: NetworkConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dirichlet: Vec<DirichletBc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neumann: Vec<NeumannBc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_load: Vec<UnknownLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<ObservationsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<DynamicConfig>,
    pub train: TrainBlock,
    #[serde(default)]
    pub output: OutputConfig,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_expr(src: &str, what: &str) -> Result<()> {
    expr::parse(src)
        .map(|_| ())
        .map_err(|e| bad(format!("{what} `{src}`: {e}")))
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<ProblemConfig> {
        let cfg: ProblemConfig =
            toml::from_str(text).map_err(|e| bad(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from disk; the returned directory anchors the config's relative
    /// paths.
    pub fn from_path(path: &Path) -> Result<(ProblemConfig, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let cfg = ProblemConfig::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, dir))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad(format!("config serialization: {e}")))
    }

    /// Resolve a config-relative path against the config's directory.
    pub fn resolve(dir: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            dir.join(p)
        }
    }

    /// All static consistency checks (everything not needing the mesh).
    pub fn validate(&self) -> Result<()> {
        if self.mesh.path.is_empty() {
            return Err(bad("mesh.path is empty"));
        }
        for rule in &self.tag {
            if rule.name.is_empty() {
                return Err(bad("tag rule with an empty name"));
            }
            check_expr(&rule.predicate, "tag predicate")?;
        }

        self.material.material().validate()?;
        if self.material.beta < 0.0 {
            return Err(bad("material.beta must be nonnegative"));
        }
        if self.material.rho <= 0.0 || self.material.stiffness <= 0.0 {
            return Err(bad("material.rho and material.stiffness must be positive"));
        }

        if self.basis.n == 0 {
            return Err(bad("basis.n must be at least 1"));
        }
        if self.basis.variant.is_some() && self.basis.kind != BasisKindChoice::Analytic {
            return Err(bad("basis.variant only applies to the analytic kind"));
        }
        if let Some(c) = self.basis.shape_c {
            if self.basis.kind != BasisKindChoice::Rbf {
                return Err(bad("basis.shape_c only applies to the rbf kind"));
            }
            if !(c > 0.0) {
                return Err(bad("basis.shape_c must be positive"));
            }
        }

        if !self.model.baseline {
            if self.model.n_u > self.basis.n || self.model.n_sigma > self.basis.n {
                return Err(bad(format!(
                    "model wants {} displacement / {} stress modes but the basis has {}",
                    self.model.n_u, self.model.n_sigma, self.basis.n
                )));
            }
            if self.form == Form::Strong && self.model.n_sigma == 0 {
                return Err(bad("the strong form needs a stress network (n_sigma >= 1)"));
            }
        }

        match self.form {
            Form::Dynamic => {
                let dyn_cfg = self
                    .dynamic
                    .as_ref()
                    .ok_or_else(|| bad("the dynamic form needs a [dynamic] block"))?;
                if !(dyn_cfg.length > 0.0) || !(dyn_cfg.duration > 0.0) {
                    return Err(bad("dynamic.length and dynamic.duration must be positive"));
                }
                if dyn_cfg.nx < 2 || dyn_cfg.nt < 2 {
                    return Err(bad("dynamic.nx and dynamic.nt must be at least 2"));
                }
                if dyn_cfg.oracle_nx < 8 {
                    return Err(bad("dynamic.oracle_nx must be at least 8"));
                }
                check_expr(&dyn_cfg.drive, "drive signal")?;
                if !self.dirichlet.is_empty()
                    || !self.neumann.is_empty()
                    || !self.unknown_load.is_empty()
                {
                    return Err(bad(
                        "the dynamic form takes its boundary conditions from [dynamic]; \
                         remove the dirichlet/neumann/unknown_load blocks",
                    ));
                }
                if self.observations.is_some() {
                    return Err(bad("measurements are not supported for the dynamic form"));
                }
            }
            Form::Weak | Form::Strong => {
                if self.dynamic.is_some() {
                    return Err(bad("a [dynamic] block needs form = \"dynamic\""));
                }
            }
        }

        // Each tag may appear in at most one dirichlet block; dirichlet and
        // neumann are mutually exclusive; neumann + unknown_load together is
        // the inverse-problem idiom (the traction is ground truth only).
        let mut owners: Vec<(&str, &'static str)> = Vec::new();
        for d in &self.dirichlet {
            if d.tags.is_empty() {
                return Err(bad("dirichlet block with no tags"));
            }
            if d.value.is_empty() || d.value.len() > 2 {
                return Err(bad("dirichlet.value needs one expression per component"));
            }
            for v in &d.value {
                check_expr(v, "dirichlet value")?;
            }
            for t in &d.tags {
                if owners.iter().any(|(tag, _)| tag == t) {
                    return Err(bad(format!("tag `{t}` appears in more than one BC block")));
                }
                owners.push((t, "dirichlet"));
            }
        }
        for nbc in &self.neumann {
            if nbc.tags.is_empty() {
                return Err(bad("neumann block with no tags"));
            }
            if nbc.traction.is_empty() || nbc.traction.len() > 2 {
                return Err(bad("neumann.traction needs one expression per component"));
            }
            for v in &nbc.traction {
                check_expr(v, "traction value")?;
            }
            for t in &nbc.tags {
                if owners.iter().any(|(tag, role)| tag == t && *role == "dirichlet") {
                    return Err(bad(format!(
                        "tag `{t}` cannot be both dirichlet and neumann"
                    )));
                }
                owners.push((t, "neumann"));
            }
        }
        for ul in &self.unknown_load {
            if ul.tags.is_empty() {
                return Err(bad("unknown_load block with no tags"));
            }
            for t in &ul.tags {
                if owners.iter().any(|(tag, role)| tag == t && *role == "dirichlet") {
                    return Err(bad(format!(
                        "tag `{t}` cannot be both dirichlet and unknown_load"
                    )));
                }
            }
        }

        if let Some(obs) = &self.observations {
            let sampled = obs.kind.is_some() || obs.n.is_some();
            match (&obs.path, sampled) {
                (Some(_), true) => {
                    return Err(bad(
                        "observations: give either a path or kind+n, not both",
                    ))
                }
                (None, true) => {
                    if obs.kind.is_none() || obs.n.is_none() {
                        return Err(bad(
                            "reference-sampled observations need both kind and n",
                        ));
                    }
                    if obs.n == Some(0) {
                        return Err(bad("observations.n must be at least 1"));
                    }
                }
                (None, false) => {
                    return Err(bad("observations block without a path or kind+n"))
                }
                (Some(_), false) => {}
            }
            if obs.noise < 0.0 {
                return Err(bad("observations.noise must be nonnegative"));
            }
        }

        if let Some(r) = &self.reference {
            if r.path.is_some() == r.compute {
                return Err(bad(
                    "reference: give either a path or compute = true, not both or neither",
                ));
            }
        }
        if let Some(obs) = &self.observations {
            if (obs.kind.is_some() || obs.n.is_some()) && self.reference.is_none() {
                return Err(bad(
                    "reference-sampled observations need a [reference] block",
                ));
            }
        }

        self.train.train_config().validate()?;
        let w = &self.train.weights;
        for (name, v) in [
            ("data", w.data),
            ("dbc", w.dbc),
            ("nbc", w.nbc),
            ("pde", w.pde),
            ("constitutive", w.constitutive),
            ("ic", w.ic),
        ] {
            if !(v >= 0.0) {
                return Err(bad(format!("train.weights.{name} must be nonnegative")));
            }
        }

        Ok(())
    }

    /// Tags claimed by any dirichlet block, with their value expressions and
    /// hardness.
    pub fn dirichlet_for(&self, tag: &str) -> Option<&DirichletBc> {
        self.dirichlet.iter().find(|d| d.tags.iter().any(|t| t == tag))
    }

    pub fn neumann_for(&self, tag: &str) -> Option<&NeumannBc> {
        self.neumann.iter().find(|n| n.tags.iter().any(|t| t == tag))
    }

    pub fn is_unknown_load(&self, tag: &str) -> bool {
        self.unknown_load
            .iter()
            .any(|u| u.tags.iter().any(|t| t == tag))
    }
}
