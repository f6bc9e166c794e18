//! Semicircular generators with atomic spectral measures.
//!
//! Each generator is described by a finite measure `μ = Σ w_k δ_{x_k}` and its
//! two-point function `η(z) = Σ w_k e^{2πi z x_k}`. The measure satisfies
//! detailed balance `w(−x) = w(x)·e^{−2πx}`, which is exactly the KMS
//! property `η(t+i) = η(−t)`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{Family, GenId, Letter, NcPoly, TimeTag};
use crate::error::{Error, Result};

/// Relative tolerance used when matching detailed-balance partner weights.
pub const BALANCE_REL_TOL: f64 = 1e-12;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// The frequency `ln 2 / 2π`, for which `e^{−2πa} = 1/2`.
pub fn ln2_over_2pi() -> f64 {
    LN_2 / (2.0 * PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAtom {
    pub x: f64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub atoms: Vec<SpectralAtom>,
}

impl GeneratorSpec {
    pub fn new(name: impl Into<String>, atoms: Vec<SpectralAtom>) -> Self {
        GeneratorSpec {
            name: name.into(),
            atoms,
        }
    }

    /// `v = φ(X²) = η(0)`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn is_tracial(&self) -> bool {
        self.atoms.iter().all(|a| a.x == 0.0)
    }

    pub fn eta(&self, z: Complex64) -> Complex64 {
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        self.atoms
            .iter()
            .map(|a| a.w * (two_pi_i * z * a.x).exp())
            .sum()
    }

    pub fn eta_real(&self, t: f64) -> Complex64 {
        self.eta(Complex64::new(t, 0.0))
    }

    /// Multiplies every weight by `factor`, i.e. rescales `η`.
    pub fn scaled(&self, factor: f64) -> GeneratorSpec {
        GeneratorSpec {
            name: self.name.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|a| SpectralAtom {
                    x: a.x,
                    w: a.w * factor,
                })
                .collect(),
        }
    }

    /// Checks `w(−x) = w(x)·e^{−2πx}` for every atom with `x ≠ 0`.
    pub fn check_detailed_balance(&self) -> Result<()> {
        for a in &self.atoms {
            if a.x == 0.0 {
                continue;
            }
            let expected = a.w * (-2.0 * PI * a.x).exp();
            let partner = self.atoms.iter().find(|b| b.x == -a.x);
            let ok = partner
                .is_some_and(|b| (b.w - expected).abs() <= BALANCE_REL_TOL * b.w.max(expected));
            if !ok {
                return Err(Error::DetailedBalanceViolation {
                    gen: self.name.clone(),
                    x: a.x,
                    w: a.w,
                    partner_x: -a.x,
                    expected,
                });
            }
        }
        Ok(())
    }
}

/// Outcome of [`check_kms`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KmsReport {
    pub generator: String,
    pub points: usize,
    pub max_deviation: f64,
}

/// `max_t |η(t+i) − η(−t)|` over the grid, without checking the atoms.
pub fn kms_deviation(g: &GeneratorSpec, t_grid: &[f64]) -> f64 {
    t_grid
        .iter()
        .map(|&t| (g.eta(Complex64::new(t, 1.0)) - g.eta_real(-t)).norm())
        .fold(0.0, f64::max)
}

pub fn check_kms(g: &GeneratorSpec, t_grid: &[f64]) -> Result<KmsReport> {
    g.check_detailed_balance()?;
    Ok(KmsReport {
        generator: g.name.clone(),
        points: t_grid.len(),
        max_deviation: kms_deviation(g, t_grid),
    })
}

pub fn eta(g: &GeneratorSpec, z: Complex64) -> Complex64 {
    g.eta(z)
}

/// A finite family of mutually free semicircular generators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub generators: Vec<GeneratorSpec>,
    pub tolerance: f64,
}

impl ModelSpec {
    pub fn new(generators: Vec<GeneratorSpec>) -> Result<Self> {
        ModelSpec::with_tolerance(generators, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(generators: Vec<GeneratorSpec>, tolerance: f64) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Config("model has no generators".into()));
        }
        if generators.len() > u16::MAX as usize {
            return Err(Error::Config("too many generators".into()));
        }
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        for (i, g) in generators.iter().enumerate() {
            if generators[..i].iter().any(|h| h.name == g.name) {
                return Err(Error::Config(format!(
                    "duplicate generator name `{}`",
                    g.name
                )));
            }
            validate_atoms(g)?;
        }
        Ok(ModelSpec {
            generators,
            tolerance,
        })
    }

    /// Single generator `X` with atoms `(a, 2/3)` and `(−a, 1/3)`, `a = ln2/2π`.
    pub fn two_atom() -> Self {
        ModelSpec::new(vec![two_atom_generator("X", 1.0)]).expect("valid built-in model")
    }

    /// Single tracial generator `X` with spectral measure `v·δ₀`.
    pub fn tracial(v: f64) -> Self {
        ModelSpec::new(vec![GeneratorSpec::new(
            "X",
            vec![SpectralAtom { x: 0.0, w: v }],
        )])
        .expect("valid built-in model")
    }

    pub fn gen(&self, id: GenId) -> &GeneratorSpec {
        &self.generators[id.0 as usize]
    }

    pub fn gen_ids(&self) -> impl Iterator<Item = GenId> + '_ {
        (0..self.generators.len()).map(|i| GenId(i as u16))
    }

    pub fn gen_id(&self, name: &str) -> Option<GenId> {
        self.generators
            .iter()
            .position(|g| g.name == name)
            .map(|i| GenId(i as u16))
    }

    pub fn eta(&self, id: GenId, z: Complex64) -> Complex64 {
        self.gen(id).eta(z)
    }

    pub fn eta_real(&self, id: GenId, t: f64) -> Complex64 {
        self.gen(id).eta_real(t)
    }

    /// `φ(X_g²)` for generator `g`.
    pub fn variance(&self, id: GenId) -> f64 {
        self.gen(id).total_mass()
    }

    pub fn with_tolerance_override(&self, tolerance: f64) -> Result<Self> {
        ModelSpec::with_tolerance(self.generators.clone(), tolerance)
    }

    /// Every two-point function multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ModelSpec::with_tolerance(
            self.generators.iter().map(|g| g.scaled(factor)).collect(),
            self.tolerance,
        )
    }

    pub fn letter_is_tracial(&self, l: Letter) -> bool {
        self.gen(l.gen).is_tracial()
    }

    /// Collapses time tags of tracial generators to 0, where all translates coincide.
    pub fn collapse_tracial(&self, p: &NcPoly) -> NcPoly {
        p.map_letters(|l| {
            if self.letter_is_tracial(l) {
                Letter {
                    time: TimeTag::ZERO,
                    ..l
                }
            } else {
                l
            }
        })
    }

    pub fn check_letter(&self, l: Letter) -> Result<()> {
        if (l.gen.0 as usize) < self.generators.len() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "letter {l} refers to an unknown generator"
            )))
        }
    }

    /// Parses a `NAME:time` token; `Y`-prefixed names refer to the partner of `X`-prefixed ones.
    pub fn parse_letter(&self, token: &str) -> Result<Letter> {
        let (name, time) = token
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected NAME:time, got `{token}`")))?;
        let time: TimeTag = time.parse()?;
        if let Some(id) = self.gen_id(name) {
            return Ok(Letter::x(id, time));
        }
        if let Some(rest) = name.strip_prefix('Y') {
            if let Some(id) = self.gen_id(&format!("X{rest}")) {
                return Ok(Letter::y(id, time));
            }
        }
        Err(Error::Parse(format!(
            "unknown generator `{name}` in `{token}`"
        )))
    }

    pub fn parse_word(&self, text: &str) -> Result<crate::algebra::Word> {
        text.split_whitespace()
            .map(|tok| self.parse_letter(tok))
            .collect::<Result<Vec<_>>>()
            .map(crate::algebra::Word)
    }

    pub fn format_letter(&self, l: Letter) -> String {
        let name = &self.gen(l.gen).name;
        match l.family {
            Family::X => format!("{name}:{}", l.time),
            Family::Y => {
                let base = name.strip_prefix('X').unwrap_or(name);
                format!("Y{base}:{}", l.time)
            }
        }
    }

    pub fn format_word(&self, w: &crate::algebra::Word) -> String {
        if w.is_empty() {
            return "1".into();
        }
        w.letters()
            .iter()
            .map(|&l| self.format_letter(l))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn validate_atoms(g: &GeneratorSpec) -> Result<()> {
    if g.atoms.is_empty() {
        return Err(Error::Config(format!(
            "generator `{}` has no atoms",
            g.name
        )));
    }
    for (i, a) in g.atoms.iter().enumerate() {
        if !a.x.is_finite() {
            return Err(Error::Config(format!(
                "generator `{}`: non-finite frequency",
                g.name
            )));
        }
        if !(a.w.is_finite() && a.w > 0.0) {
            return Err(Error::Config(format!(
                "generator `{}`: weight must be positive, got {}",
                g.name, a.w
            )));
        }
        if g.atoms[..i].iter().any(|b| b.x == a.x) {
            return Err(Error::Config(format!(
                "generator `{}`: repeated frequency {}",
                g.name, a.x
            )));
        }
    }
    Ok(())
}

/// The two-atom generator with weights `(2/3, 1/3)·scale` at `±ln2/2π`.
pub fn two_atom_generator(name: &str, scale: f64) -> GeneratorSpec {
    let a = ln2_over_2pi();
    let w = 2.0 / 3.0 * scale;
    GeneratorSpec::new(
        name,
        vec![
            SpectralAtom { x: a, w },
            SpectralAtom {
                x: -a,
                w: w * (-2.0 * PI * a).exp(),
            },
        ],
    )
}

// ---------------------------------------------------------------------------
// Config ingestion

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomMode {
    Half,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Number(f64),
    Named(String),
}

impl Frequency {
    pub fn value(&self) -> Result<f64> {
        match self {
            Frequency::Number(x) => Ok(*x),
            Frequency::Named(s) => match s.replace(' ', "").as_str() {
                "ln2/(2pi)" => Ok(ln2_over_2pi()),
                "-ln2/(2pi)" => Ok(-ln2_over_2pi()),
                other => other
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("unrecognized frequency `{s}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub x: Frequency,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub name: String,
    pub mode: AtomMode,
    pub atoms: Vec<AtomConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub generators: Vec<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn build_model(config: &ModelConfig) -> Result<ModelSpec> {
    let mut generators = Vec::with_capacity(config.generators.len());
    for gc in &config.generators {
        let mut atoms = Vec::new();
        for ac in &gc.atoms {
            let x = ac.x.value()?;
            atoms.push(SpectralAtom { x, w: ac.w });
        }
        let g = match gc.mode {
            AtomMode::Full => {
                let g = GeneratorSpec::new(gc.name.clone(), atoms);
                validate_atoms(&g)?;
                g.check_detailed_balance()?;
                g
            }
            AtomMode::Half => {
                let mut full = Vec::new();
                for a in atoms {
                    if a.x < 0.0 {
                        return Err(Error::Config(format!(
                            "generator `{}`: half mode takes non-negative frequencies, got {}",
                            gc.name, a.x
                        )));
                    }
                    full.push(a);
                    if a.x > 0.0 {
                        full.push(SpectralAtom {
                            x: -a.x,
                            w: a.w * (-2.0 * PI * a.x).exp(),
                        });
                    }
                }
                GeneratorSpec::new(gc.name.clone(), full)
            }
        };
        generators.push(g);
    }
    ModelSpec::with_tolerance(generators, config.tolerance.unwrap_or(DEFAULT_TOLERANCE))
}

pub fn load_model_json(text: &str) -> Result<ModelSpec> {
    build_model(&ModelConfig::from_json(text)?)
}
