//! TOML scene files: loading, `key=value` overrides and experiment lists.
//!
//! A scene file holds the [`SceneConfig`] keys at top level plus an optional
//! `[[experiments]]` array. Each experiment has a `name`, optional `n_frames`
//! (default 1) and `reference`, and an optional `set` table whose keys are
//! merged over the base scene.

use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::evalbench::ExperimentSpec;
use crate::renderer::SceneConfig;

/// The canonical heterogeneous scene shipped with the crate.
pub const CANONICAL_SCENE: &str = include_str!("../scenes/canonical.toml");

/// A dotted-path override such as `raymarch.n_steps=8`.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl Override {
    /// Parses `key.path=value`. The value is read as a TOML value when it
    /// parses as one (`8`, `true`, `[1, 2]`, `"x"`) and as a bare string
    /// otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let (key, raw) = text.split_once('=').ok_or_else(|| {
            Error::invalid("override", format!("expected key=value, got `{text}`"))
        })?;
        let path: Vec<String> = key
            .trim()
            .split('.')
            .map(|s| s.trim().to_string())
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::invalid(
                "override",
                format!("malformed key `{}`", key.trim()),
            ));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Override { path, value })
    }

    fn apply(&self, table: &mut Table) -> std::result::Result<(), String> {
        let (last, parents) = self
            .path
            .split_last()
            .expect("override paths are never empty");
        let mut cur = table;
        for (i, key) in parents.iter().enumerate() {
            let entry = cur
                .entry(key.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| format!("`{}` is not a table", self.path[..=i].join(".")))?;
        }
        cur.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

/// Parsed contents of a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub scene: SceneConfig,
    /// Experiments from `[[experiments]]`, in file order; empty when absent.
    pub experiments: Vec<ExperimentSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    #[serde(default = "one")]
    n_frames: u32,
    reference: Option<String>,
    #[serde(default)]
    set: Table,
}

fn one() -> u32 {
    1
}

/// Recursively merges `patch` into `base`; tables merge, anything else
/// replaces.
fn merge(base: &mut Table, patch: &Table) {
    for (key, value) in patch {
        match (base.get_mut(key), value) {
            (Some(Value::Table(b)), Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn scene_from_table(table: Table) -> std::result::Result<SceneConfig, String> {
    let scene = SceneConfig::deserialize(Value::Table(table))
        .map_err(|e| e.to_string().trim_end().to_string())?;
    scene.validate().map_err(|e| e.to_string())?;
    Ok(scene)
}

/// Parses a scene file's text. `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &Path, overrides: &[Override]) -> Result<LoadedConfig> {
    let fail = |message: String| Error::Config {
        path: origin.to_path_buf(),
        message,
    };

    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| fail(e.to_string().trim_end().to_string()))?;
    let raw_experiments = match table.remove("experiments") {
        None => Vec::new(),
        Some(v) => Vec::<RawExperiment>::deserialize(v)
            .map_err(|e| fail(format!("{}\nin `experiments`", e.to_string().trim_end())))?,
    };
    for o in overrides {
        o.apply(&mut table)
            .map_err(|m| fail(format!("override `{}`: {m}", o.path.join("."))))?;
    }

    let scene = scene_from_table(table.clone()).map_err(fail)?;
    let mut experiments = Vec::with_capacity(raw_experiments.len());
    for raw in raw_experiments {
        if raw.n_frames == 0 {
            return Err(fail(format!(
                "experiment `{}`: n_frames must be >= 1",
                raw.name
            )));
        }
        let mut t = table.clone();
        merge(&mut t, &raw.set);
        let scene =
            scene_from_table(t).map_err(|m| fail(format!("experiment `{}`: {m}", raw.name)))?;
        experiments.push(ExperimentSpec {
            name: raw.name,
            scene,
            n_frames: raw.n_frames,
            reference: raw.reference,
        });
    }
    crate::evalbench::check_references(&experiments).map_err(|e| fail(e.to_string()))?;
    Ok(LoadedConfig { scene, experiments })
}

/// Reads and parses a scene file, applying `overrides` to the base scene
/// before any experiment patches.
pub fn load_config(path: &Path, overrides: &[Override]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_config(&text, path, overrides)
}

/// The canonical scene with `overrides` applied.
pub fn canonical_scene(overrides: &[Override]) -> Result<SceneConfig> {
    Ok(parse_config(CANONICAL_SCENE, Path::new("<canonical>"), overrides)?.scene)
}

/// Serializes a scene to TOML text that [`parse_config`] reads back to an
/// identical value.
pub fn to_toml_string(scene: &SceneConfig) -> Result<String> {
    toml::to_string(scene).map_err(|e| Error::Config {
        path: "<serialize>".into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raymarch::IntegrationMode;

    const MINIMAL: &str = r#"
[field.bounds]
min = [-1.0, -1.0, -1.0]
max = [1.0, 1.0, 1.0]
[field.shape]
kind = "constant"
density = 0.5
[camera]
position = [0.0, 0.0, 5.0]
look_at = [0.0, 0.0, 0.0]
"#;

    fn parse(text: &str, overrides: &[&str]) -> Result<LoadedConfig> {
        let o: Vec<Override> = overrides
            .iter()
            .map(|s| Override::parse(s).unwrap())
            .collect();
        parse_config(text, Path::new("test.toml"), &o)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL, &[]).unwrap();
        assert_eq!(c.scene.raymarch.n_steps, 128);
        assert_eq!(c.scene.raymarch.n_light_steps, 6);
        assert_eq!(c.scene.taa.history_weight, 0.9);
        assert_eq!(c.scene.display_resolution, (256, 256));
        assert!(c.experiments.is_empty());
    }

    #[test]
    fn canonical_scene_loads() {
        let s = canonical_scene(&[]).unwrap();
        assert_eq!(s.display_resolution, (256, 256));
    }

    #[test]
    fn invalid_phase_asymmetry_rejected() {
        let text = format!("{MINIMAL}\n[medium]\nhg_g = 1.5\n");
        let msg = parse(&text, &[]).unwrap_err().to_string();
        assert!(msg.contains("hg_g") && msg.contains("test.toml"), "{msg}");
    }

    #[test]
    fn overrides_take_precedence() {
        let c = parse(
            MINIMAL,
            &[
                "raymarch.n_steps=8",
                "raymarch.integration=naive",
                "medium.hg_g = -0.3",
            ],
        )
        .unwrap();
        assert_eq!(c.scene.raymarch.n_steps, 8);
        assert_eq!(c.scene.raymarch.integration, IntegrationMode::Naive);
        assert_eq!(c.scene.medium.hg_g, -0.3);
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let msg = parse(MINIMAL, &["raymarch.n_stepz=8"])
            .unwrap_err()
            .to_string();
        assert!(msg.contains("n_stepz") && msg.contains("raymarch"), "{msg}");
        let msg = parse(&format!("{MINIMAL}\nbogus = 1\n"), &[])
            .unwrap_err()
            .to_string();
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line() {
        let msg = parse("[camera]\nposition = [0, 0\n", &[])
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 2") || msg.contains("2 |"), "{msg}");
    }

    #[test]
    fn override_parsing() {
        let o = Override::parse("a.b.c=hello").unwrap();
        assert_eq!(o.path, ["a", "b", "c"]);
        assert_eq!(o.value, Value::String("hello".into()));
        assert_eq!(
            Override::parse("x=[1, 2]").unwrap().value,
            Value::Array(vec![1.into(), 2.into()])
        );
        assert!(Override::parse("novalue").is_err());
        assert!(Override::parse("a..b=1").is_err());
        assert!(parse(MINIMAL, &["camera.position.x=1"]).is_err());
    }

    #[test]
    fn experiments_patch_the_base_scene() {
        let text = format!(
            "{MINIMAL}\n[[experiments]]\nname = \"ref\"\n\n[[experiments]]\nname = \"cheap\"\nreference = \"ref\"\nn_frames = 3\nset = {{ raymarch = {{ n_steps = 8 }}, cloud_buffer_scale = \"quarter\" }}\n"
        );
        let c = parse(&text, &["raymarch.n_light_steps=2"]).unwrap();
        assert_eq!(c.experiments.len(), 2);
        let cheap = &c.experiments[1];
        assert_eq!(
            (
                cheap.scene.raymarch.n_steps,
                cheap.scene.raymarch.n_light_steps,
                cheap.n_frames
            ),
            (8, 2, 3)
        );
        assert_eq!(cheap.reference.as_deref(), Some("ref"));
        assert_eq!(c.experiments[0].scene, c.scene);
    }

    #[test]
    fn experiment_cycles_rejected() {
        let text = format!(
            "{MINIMAL}\n[[experiments]]\nname = \"a\"\nreference = \"b\"\n[[experiments]]\nname = \"b\"\nreference = \"a\"\n"
        );
        assert!(parse(&text, &[]).unwrap_err().to_string().contains("cycle"));
    }

    #[test]
    fn round_trip_is_identical() {
        for text in [MINIMAL, CANONICAL_SCENE] {
            let scene = parse(text, &[]).unwrap().scene;
            let again = parse(&to_toml_string(&scene).unwrap(), &[]).unwrap().scene;
            assert_eq!(scene, again);
        }
    }
}
