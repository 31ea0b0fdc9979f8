//! Synthetic trace generation: deterministic PNG frames per scenario state,
//! seeded optional-state inclusion, and the mutation categories the
//! benchmark needs (wrong states for product bugs, off-script detours for
//! agent issues, flipped self-reports for false successes and missed bugs).
//!
//! Every frame is a striped pattern derived from the state name's digest
//! plus a blocky label strip; per-trace cosmetic jitter is a global channel
//! shift in 0..=3, far below the Tier-1 equal-band thresholds, so frames of
//! one logical state merge across traces while frames of different states
//! land in the distinct band.

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use tracedom_core::trace::{ManifestAction, ManifestState, TraceManifest, TraceRole};
use tracedom_core::Digest;

pub const FRAME_SIDE: u32 = 96;
/// Spread of the per-trace jitter; beyond 3 all-dark frames leave the SSIM
/// equal band.
pub const MAX_JITTER_SHIFT: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioState {
    pub name: String,
    #[serde(default)]
    pub optional: bool,
    /// Action kind the agent performs in this state to move on; defaults to
    /// a fixed cycle when omitted. Ignored for the last state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_kind: Option<String>,
}

/// The state-sequence template traces are generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub states: Vec<ScenarioState>,
    /// Indices eligible for mutation; defaults to every non-optional state
    /// except the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_points: Option<Vec<usize>>,
}

const DEFAULT_KINDS: [&str; 4] = ["type", "click", "wait", "key"];

impl Scenario {
    /// The app-launch-and-search flow used throughout the docs and tests:
    /// a loading screen that may or may not appear, everything else
    /// mandatory.
    pub fn default_flow() -> Self {
        let mk = |name: &str, optional: bool, kind: &str| ScenarioState {
            name: name.into(),
            optional,
            exit_kind: Some(kind.into()),
        };
        Scenario {
            states: vec![
                mk("startmenu", false, "type"),
                mk("launch", false, "click"),
                mk("loading", true, "wait"),
                mk("mainwindow", false, "key"),
                mk("searchdialog", false, "type"),
                mk("results", false, "click"),
            ],
            mutation_points: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            bail!("scenario needs at least two states");
        }
        if self.states.first().unwrap().optional {
            bail!("the first scenario state cannot be optional");
        }
        if self.states.last().unwrap().optional {
            bail!("the terminal scenario state cannot be optional");
        }
        if self.essential_indices().len() < 2 {
            bail!("scenario needs at least two non-optional states");
        }
        if let Some(points) = &self.mutation_points {
            for &p in points {
                if p >= self.states.len() {
                    bail!("mutation point {p} is outside the scenario");
                }
                if self.states[p].optional {
                    bail!("mutation point {p} targets an optional state");
                }
            }
        }
        Ok(())
    }

    pub fn exit_kind(&self, index: usize) -> String {
        self.states[index]
            .exit_kind
            .clone()
            .unwrap_or_else(|| DEFAULT_KINDS[index % DEFAULT_KINDS.len()].to_string())
    }

    pub fn essential_indices(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&i| !self.states[i].optional)
            .collect()
    }

    /// States a product bug may replace (essential, never the initial).
    pub fn product_mutation_points(&self) -> Vec<usize> {
        self.mutation_candidates()
            .into_iter()
            .filter(|&p| p != 0)
            .collect()
    }

    /// States where the agent may go off-script (essential, never the
    /// terminal: acting requires somewhere to act from).
    pub fn agent_mutation_points(&self) -> Vec<usize> {
        let last = self.states.len() - 1;
        self.mutation_candidates()
            .into_iter()
            .filter(|&p| p != last)
            .collect()
    }

    fn mutation_candidates(&self) -> Vec<usize> {
        match &self.mutation_points {
            Some(points) => points.clone(),
            None => self.essential_indices(),
        }
    }
}

// --- frame rendering ---

fn quant(b: u8) -> u8 {
    (b / 32) * 32 + 16
}

/// Deterministic striped pattern for one state name, plus a label strip;
/// `shift` is the per-trace cosmetic jitter.
pub fn render_frame(name: &str, shift: u8) -> RgbImage {
    debug_assert!(shift <= MAX_JITTER_SHIFT);
    let hex = Digest::of_bytes(name.as_bytes()).to_hex();
    let byte = |i: usize| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap();
    let base = [quant(byte(0)), quant(byte(1)), quant(byte(2))];
    let stripe = [quant(byte(3)), quant(byte(4)), quant(byte(5))];
    let period = 8 + u32::from(byte(6) % 4) * 4;
    let horizontal = byte(7) % 2 == 0;

    let mut img = RgbImage::from_fn(FRAME_SIDE, FRAME_SIDE, |x, y| {
        let coord = if horizontal { y } else { x };
        if (coord / (period / 2)) % 2 == 0 {
            Rgb(base)
        } else {
            Rgb(stripe)
        }
    });

    // Blocky label text along the top edge, one block per character.
    for (i, b) in name.bytes().enumerate() {
        let x0 = (i as u32) * 8;
        if x0 + 8 > FRAME_SIDE {
            break;
        }
        let shade = quant(b.wrapping_mul(37));
        for y in 0..8 {
            for x in x0..x0 + 8 {
                img.put_pixel(x, y, Rgb([shade, shade, shade.wrapping_add(64)]));
            }
        }
    }

    if shift > 0 {
        for p in img.pixels_mut() {
            for c in p.0.iter_mut() {
                *c += shift; // quantized channels stay <= 240, no clamping
            }
        }
    }
    img
}

pub fn frame_png(name: &str, shift: u8) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image::DynamicImage::ImageRgb8(render_frame(name, shift))
        .write_to(&mut out, image::ImageFormat::Png)
        .unwrap();
    out.into_inner()
}

/// One step of a rendered trace: the state's label and the action kind that
/// leaves it (None for the final state).
#[derive(Debug, Clone)]
pub struct Step {
    pub name: String,
    pub exit_kind: Option<String>,
}

/// Writes a trace directory: `trace.json` plus `states/NNN.png`.
pub fn render_trace(dir: &Path, id: &str, role: TraceRole, steps: &[Step], shift: u8) -> Result<()> {
    let states_dir = dir.join("states");
    fs::create_dir_all(&states_dir)
        .with_context(|| format!("creating {}", states_dir.display()))?;

    let mut states = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let file = format!("states/{i:03}.png");
        fs::write(dir.join(&file), frame_png(&step.name, shift))?;
        states.push(ManifestState {
            image: file,
            label: Some(step.name.clone()),
        });
    }

    let mut actions = Vec::new();
    for (i, step) in steps.iter().enumerate().take(steps.len().saturating_sub(1)) {
        let kind = step
            .exit_kind
            .clone()
            .expect("non-final steps carry an exit kind");
        let mut params = IndexMap::new();
        params.insert("target".to_string(), steps[i + 1].name.clone());
        actions.push(ManifestAction { kind, params });
    }

    let manifest = TraceManifest {
        id: id.to_string(),
        role,
        states,
        actions,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(dir.join("trace.json"), bytes)?;
    Ok(())
}

/// Structural category of a generated test trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Passing,
    AgentIssue,
    ProductBug,
}

/// Suite-level metadata for one generated test trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTrace {
    pub id: String,
    /// Directory, relative to the suite root.
    pub dir: String,
    pub category: Category,
    pub ground_truth_pass: bool,
    /// The simulated agent's own claim; differs from ground truth on
    /// false-success and missed-bug traces.
    pub self_report_pass: bool,
}

/// suite.json: everything the benchmark needs to replay the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub seed: u64,
    pub training: Vec<String>,
    pub tests: Vec<GeneratedTrace>,
}

/// Generates the full suite under `out_dir` and writes `suite.json`.
/// Identical spec and seed produce byte-identical directory trees.
pub fn generate_synthetic_suite(
    spec: &crate::bench::BenchmarkSpec,
    out_dir: &Path,
) -> Result<SuiteManifest> {
    spec.validate()?;
    let scenario = &spec.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    fs::create_dir_all(out_dir)?;

    let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(0..=MAX_JITTER_SHIFT);

    // Steps of a scenario-faithful walk. Training trace 0 carries every
    // optional state and trace 1 none, so optionality is observable in any
    // training set; everything else draws a seeded coin.
    let walk_steps = |scenario: &Scenario, include_optional: &dyn Fn(usize) -> bool| -> Vec<Step> {
        let mut present: Vec<usize> = Vec::new();
        for (i, st) in scenario.states.iter().enumerate() {
            if !st.optional || include_optional(i) {
                present.push(i);
            }
        }
        present
            .iter()
            .enumerate()
            .map(|(pos, &i)| Step {
                name: scenario.states[i].name.clone(),
                exit_kind: if pos + 1 < present.len() {
                    Some(scenario.exit_kind(i))
                } else {
                    None
                },
            })
            .collect()
    };

    let mut training = Vec::new();
    for t in 0..spec.n_training {
        let shift = jitter(&mut rng);
        let coins: Vec<bool> = scenario.states.iter().map(|_| rng.gen_bool(0.5)).collect();
        let include: Box<dyn Fn(usize) -> bool> = match t {
            0 => Box::new(|_| true),
            1 => Box::new(|_| false),
            _ => Box::new(move |i| coins[i]),
        };
        let id = format!("train-{t:02}");
        let dir = format!("training/{id}");
        render_trace(
            &out_dir.join(&dir),
            &id,
            TraceRole::Training,
            &walk_steps(scenario, include.as_ref()),
            shift,
        )?;
        training.push(dir);
    }

    let mut tests: Vec<GeneratedTrace> = Vec::new();
    let mut test_index = 0usize;

    let mut push_test = |steps: Vec<Step>,
                         category: Category,
                         ground_truth_pass: bool,
                         shift: u8,
                         tests: &mut Vec<GeneratedTrace>|
     -> Result<()> {
        let label = match category {
            Category::Passing => "passing",
            Category::AgentIssue => "agent-issue",
            Category::ProductBug => "product-bug",
        };
        let id = format!("test-{test_index:03}-{label}");
        let dir = format!("tests/{id}");
        render_trace(&out_dir.join(&dir), &id, TraceRole::Test, &steps, shift)?;
        tests.push(GeneratedTrace {
            id,
            dir,
            category,
            ground_truth_pass,
            self_report_pass: ground_truth_pass,
        });
        test_index += 1;
        Ok(())
    };

    for _ in 0..spec.test_mix.passing {
        let shift = jitter(&mut rng);
        let coins: Vec<bool> = scenario.states.iter().map(|_| rng.gen_bool(0.5)).collect();
        let steps = walk_steps(scenario, &|i| coins[i]);
        push_test(steps, Category::Passing, true, shift, &mut tests)?;
    }

    let agent_points = scenario.agent_mutation_points();
    for _ in 0..spec.test_mix.agent_issue {
        let shift = jitter(&mut rng);
        let coins: Vec<bool> = scenario.states.iter().map(|_| rng.gen_bool(0.5)).collect();
        let point = agent_points[rng.gen_range(0..agent_points.len())];
        // Correct walk up to the mutation point, then an off-script action
        // into detour states the model has never seen.
        let mut steps: Vec<Step> = Vec::new();
        for (i, st) in scenario.states.iter().enumerate() {
            if i > point {
                break;
            }
            if st.optional && !coins[i] {
                continue;
            }
            steps.push(Step {
                name: st.name.clone(),
                exit_kind: Some(scenario.exit_kind(i)),
            });
        }
        steps.last_mut().unwrap().exit_kind = Some("misclick".into());
        steps.push(Step {
            name: "detour-menu".into(),
            exit_kind: Some("wander".into()),
        });
        steps.push(Step {
            name: "detour-dialog".into(),
            exit_kind: None,
        });
        push_test(steps, Category::AgentIssue, false, shift, &mut tests)?;
    }

    let product_points = scenario.product_mutation_points();
    for _ in 0..spec.test_mix.product_bug {
        let shift = jitter(&mut rng);
        let coins: Vec<bool> = scenario.states.iter().map(|_| rng.gen_bool(0.5)).collect();
        let point = product_points[rng.gen_range(0..product_points.len())];
        // Correct walk and correct actions, but the state at the mutation
        // point renders as a visually-distinct wrong screen and the run
        // dies there.
        let mut steps: Vec<Step> = Vec::new();
        for (i, st) in scenario.states.iter().enumerate() {
            if i >= point {
                break;
            }
            if st.optional && !coins[i] {
                continue;
            }
            steps.push(Step {
                name: st.name.clone(),
                exit_kind: Some(scenario.exit_kind(i)),
            });
        }
        steps.push(Step {
            name: format!("bug-{}", scenario.states[point].name),
            exit_kind: None,
        });
        push_test(steps, Category::ProductBug, false, shift, &mut tests)?;
    }

    // Mislabel self-reports: the first failing traces claim success, the
    // first passing traces claim failure.
    let mut to_flip = spec.test_mix.false_success;
    for t in tests.iter_mut() {
        if to_flip == 0 {
            break;
        }
        if !t.ground_truth_pass {
            t.self_report_pass = true;
            to_flip -= 1;
        }
    }
    let mut to_flip = spec.test_mix.missed_bug;
    for t in tests.iter_mut() {
        if to_flip == 0 {
            break;
        }
        if t.ground_truth_pass {
            t.self_report_pass = false;
            to_flip -= 1;
        }
    }

    let manifest = SuiteManifest {
        seed: spec.seed,
        training,
        tests,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(out_dir.join("suite.json"), bytes)?;
    Ok(manifest)
}

/// Resolves a trace argument: either a manifest file or a directory holding
/// `trace.json`.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("trace.json")
    } else {
        path.to_path_buf()
    }
}
