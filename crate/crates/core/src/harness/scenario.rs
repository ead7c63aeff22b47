use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterKind};
use crate::geometry::{AnchorSet, Position2D, Region};
use crate::measurement::NoiseModel;
use crate::mobility::{HeadingLaw, MobilityConfig};
use crate::resampling::ResamplingScheme;

/// Contents of the bundled default scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/table1.defaults");

/// File name under which the bundled scenario is addressed.
pub const DEFAULT_SCENARIO_NAME: &str = "table1.defaults";

/// A complete, serializable experiment description.
///
/// Variances follow the convention of the default scenario:
/// `measurement_noise_var` is the per-anchor range noise variance and
/// `process_noise_var` the per-axis position noise variance, both in m^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub rounds: usize,
    pub measurement_noise_var: f64,
    pub process_noise_var: f64,
    pub mobility: MobilitySpec,
    pub anchors: AnchorSpec,
    pub filter: FilterSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySpec {
    pub v_min: f64,
    pub v_max: f64,
    pub delta_t: f64,
    pub num_steps: usize,
    #[serde(default)]
    pub heading: HeadingLaw,
    /// Defaults to the center of the anchor region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<Position2D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Evenly spaced on the region's inscribed circle, first anchor at angle 0.
    #[default]
    Circle,
    /// Near-square lattice spanning the region, filled row by row.
    Grid,
    /// Explicit `positions`.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub count: usize,
    #[serde(default)]
    pub layout: Layout,
    pub region: Region,
    #[serde(default)]
    pub reference_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Position2D>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub particles: usize,
    pub n_threshold: usize,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    #[serde(default)]
    pub noise_model: NoiseModel,
    /// Range noise variance assumed by the filter; defaults to the true one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_measurement_var: Option<f64>,
    /// Process noise variance assumed by the filter; defaults to the true one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_process_var: Option<f64>,
}

impl ScenarioConfig {
    /// The bundled default scenario.
    pub fn defaults() -> Self {
        Self::parse(DEFAULT_SCENARIO, &[]).expect("bundled scenario is valid")
    }

    /// Parses TOML, applying `key.path=value` overrides before
    /// deserialization so unknown override keys are rejected like unknown
    /// file keys. Does not check semantic invariants; see [`Self::validate`].
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// Checks every invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be below 2^63, got {}", self.seed));
        }
        for (name, v) in [
            ("measurement_noise_var", self.measurement_noise_var),
            ("process_noise_var", self.process_noise_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.mobility.num_steps == 0 {
            return bad("mobility.num_steps must be >= 1".into());
        }
        self.anchor_set()?;
        self.mobility_config()?.validate()?;
        let filter = self.filter_config();
        if filter.measurement_var <= 0.0 {
            return bad(format!(
                "filter measurement variance must be > 0, got {} (set filter.model_measurement_var)",
                filter.measurement_var
            ));
        }
        filter
            .validate(self.filter.kind)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn anchor_set(&self) -> Result<AnchorSet> {
        let spec = &self.anchors;
        let positions = match spec.layout {
            Layout::Manual => {
                let positions = spec.positions.clone().ok_or_else(|| {
                    Error::Config("manual layout requires anchors.positions".into())
                })?;
                if positions.len() != spec.count {
                    return Err(Error::Config(format!(
                        "anchors.count is {} but {} positions are listed",
                        spec.count,
                        positions.len()
                    )));
                }
                if spec.count < 3 {
                    return Err(Error::TooFewAnchors {
                        required: 3,
                        actual: spec.count,
                    });
                }
                positions
            }
            layout => {
                if spec.positions.is_some() {
                    return Err(Error::Config(
                        "anchors.positions requires layout = \"manual\"".into(),
                    ));
                }
                layout_positions(spec.count, layout, &spec.region)?
            }
        };
        AnchorSet::new(positions, spec.reference_index)
    }

    pub fn mobility_config(&self) -> Result<MobilityConfig> {
        let m = &self.mobility;
        let initial_position = match m.initial_position {
            Some(p) => p,
            None => self.anchors.region.center(),
        };
        Ok(MobilityConfig {
            v_min: m.v_min,
            v_max: m.v_max,
            delta_t: m.delta_t,
            process_noise_std: self.process_noise_var.max(0.0).sqrt(),
            num_steps: m.num_steps,
            initial_position,
            heading: m.heading,
        })
    }

    pub fn filter_config(&self) -> FilterConfig {
        let f = &self.filter;
        FilterConfig {
            particles: f.particles,
            n_threshold: f.n_threshold,
            process_var: f.model_process_var.unwrap_or(self.process_noise_var),
            measurement_var: f
                .model_measurement_var
                .unwrap_or(self.measurement_noise_var),
            noise_model: f.noise_model,
            resampling: f.resampling,
            v_min: self.mobility.v_min,
            v_max: self.mobility.v_max,
            ..FilterConfig::default()
        }
    }

    /// Copy with the filter kind replaced.
    pub fn with_filter(&self, kind: FilterKind) -> Self {
        let mut c = self.clone();
        c.filter.kind = kind;
        c
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    // Anything that is not a TOML literal is taken as a bare string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for part in parents {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!("override key '{key}': '{part}' is not a table"))
        })?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Deterministic anchor layout inside `region`.
pub fn place_anchors(count: usize, layout: Layout, region: &Region) -> Result<AnchorSet> {
    AnchorSet::new(layout_positions(count, layout, region)?, 0)
}

fn layout_positions(count: usize, layout: Layout, region: &Region) -> Result<Vec<Position2D>> {
    if count < 3 {
        return Err(Error::TooFewAnchors {
            required: 3,
            actual: count,
        });
    }
    region.min.check_finite()?;
    region.max.check_finite()?;
    if !(region.width() > 0.0 && region.height() > 0.0) {
        return Err(Error::Config(format!(
            "anchor region must have positive area, got {} x {}",
            region.width(),
            region.height()
        )));
    }
    match layout {
        Layout::Circle => {
            let c = region.center();
            let radius = 0.5 * region.width().min(region.height());
            Ok((0..count)
                .map(|i| {
                    let a = TAU * i as f64 / count as f64;
                    Position2D::new(c.x + radius * a.cos(), c.y + radius * a.sin())
                })
                .collect())
        }
        Layout::Grid => {
            let cols = (count as f64).sqrt().ceil() as usize;
            let rows = count.div_ceil(cols);
            let coord = |lo: f64, span: f64, i: usize, n: usize| {
                if n == 1 {
                    lo + 0.5 * span
                } else {
                    lo + span * i as f64 / (n - 1) as f64
                }
            };
            Ok((0..count)
                .map(|i| {
                    Position2D::new(
                        coord(region.min.x, region.width(), i % cols, cols),
                        coord(region.min.y, region.height(), i / cols, rows),
                    )
                })
                .collect())
        }
        Layout::Manual => Err(Error::Config(
            "manual layout requires explicit positions".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Region {
        Region::new(Position2D::new(0.0, 0.0), Position2D::new(1.0, 1.0))
    }

    #[test]
    fn circle_layout() {
        let region = Region::new(Position2D::new(0.0, 0.0), Position2D::new(100.0, 100.0));
        let set = place_anchors(6, Layout::Circle, &region).unwrap();
        let c = Position2D::new(50.0, 50.0);
        for (i, p) in set.positions().iter().enumerate() {
            assert!((p.distance(&c) - 50.0).abs() < 1e-12);
            let angle = (p.y - 50.0).atan2(p.x - 50.0);
            let expected = std::f64::consts::PI / 3.0 * i as f64;
            let diff = crate::measurement::wrap_angle(angle - expected);
            assert!(diff.abs() < 1e-12);
        }
    }

    #[test]
    fn grid_layout_corners() {
        let set = place_anchors(4, Layout::Grid, &unit()).unwrap();
        let pts: Vec<(f64, f64)> = set.positions().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn layout_errors() {
        assert!(matches!(
            place_anchors(2, Layout::Circle, &unit()),
            Err(Error::TooFewAnchors { .. })
        ));
        let flat = Region::new(Position2D::new(0.0, 0.0), Position2D::new(10.0, 0.0));
        assert!(place_anchors(4, Layout::Grid, &flat).is_err());
    }

    #[test]
    fn defaults_match_parameter_table() {
        let c = ScenarioConfig::defaults();
        c.validate().unwrap();
        assert_eq!(c.filter.particles, 50);
        assert_eq!(c.filter.n_threshold, 10);
        assert_eq!(c.anchors.count, 6);
        assert_eq!(c.measurement_noise_var, 1.0);
        assert_eq!(c.process_noise_var, 3.0);
        assert_eq!((c.mobility.v_min, c.mobility.v_max), (1.0, 5.0));
        assert_eq!(c.mobility.num_steps, 50);
        assert_eq!(c.rounds, 200);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let c = ScenarioConfig::parse(
            DEFAULT_SCENARIO,
            &["mobility.v_max=7".into(), "filter.kind=ekf".into()],
        )
        .unwrap();
        assert_eq!(c.mobility.v_max, 7.0);
        assert_eq!(c.filter.kind, FilterKind::Ekf);
        let err = ScenarioConfig::parse(DEFAULT_SCENARIO, &["mobility.warp=1".into()]).unwrap_err();
        assert!(err.to_string().contains("warp"), "{err}");
        let err =
            ScenarioConfig::parse(&format!("{DEFAULT_SCENARIO}\nbogus = 1\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn validation_reports_first_violation() {
        let c = ScenarioConfig::parse(DEFAULT_SCENARIO, &["mobility.v_min=6".into()]).unwrap();
        assert_eq!(c.validate().unwrap_err().to_string(), "v_min exceeds v_max");
        let c = ScenarioConfig::parse(DEFAULT_SCENARIO, &["rounds=0".into()]).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("rounds"));
        let c = ScenarioConfig::parse(DEFAULT_SCENARIO, &["anchors.count=2".into()]).unwrap();
        assert!(c.validate().is_err());
        let c =
            ScenarioConfig::parse(DEFAULT_SCENARIO, &["measurement_noise_var=0".into()]).unwrap();
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("model_measurement_var"));
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let c = ScenarioConfig::defaults();
        let again = ScenarioConfig::parse(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
        assert_ne!(
            c.with_filter(FilterKind::Ekf).hash(),
            c.with_filter(FilterKind::Pf).hash()
        );
    }
}
