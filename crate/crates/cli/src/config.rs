//! Run configuration: defaults, overridden by a plain-text `key = value`
//! config file, overridden by command-line flags. The fully resolved
//! configuration is written next to every command's outputs so a run can
//! be reproduced from that file alone.

use linewalk::binarize::BinarizeConfig;
use linewalk::completion::CompletionConfig;
use linewalk::net::TrainConfig;
use linewalk::synth::SceneParams;
use linewalk::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub completion: CompletionConfig,
    pub binarize: BinarizeConfig,
    pub train: TrainConfig,
    pub scene: SceneParams,
    pub scene_count: usize,
    pub per_image: usize,
    pub jitter: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            completion: CompletionConfig::default(),
            binarize: BinarizeConfig::default(),
            train: TrainConfig::default(),
            scene: SceneParams::default(),
            scene_count: 1,
            per_image: 1000,
            jitter: true,
        }
    }
}

impl RunConfig {
    pub fn from_kv_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected key=value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Format(format!("config line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| format!("bad value for {key}: {e}"))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "seed_threshold" => self.completion.seed_threshold = parse(key, value)?,
            "checker_cell" => self.completion.checker_cell = parse(key, value)?,
            "step_p1" => self.completion.step_probabilities[0] = parse(key, value)?,
            "step_p2" => self.completion.step_probabilities[1] = parse(key, value)?,
            "step_p3" => self.completion.step_probabilities[2] = parse(key, value)?,
            "bad_prob_threshold" => self.completion.bad_prob_threshold = parse(key, value)?,
            "loop_grace" => self.completion.loop_grace = parse(key, value)?,
            "max_steps_per_tracer" => {
                let v: usize = parse(key, value)?;
                self.completion.max_steps_per_tracer = if v == 0 { None } else { Some(v) };
            }
            "th_low" => self.binarize.th_low = parse(key, value)?,
            "delta_th" => self.binarize.delta_th = parse(key, value)?,
            "gap_tolerance" => self.binarize.gap_tolerance = parse(key, value)?,
            "prune_cap" => self.binarize.prune_cap = parse(key, value)?,
            "fill_hole_area" => self.binarize.fill_hole_area = parse(key, value)?,
            "flank_rows" => self.binarize.flank_rows = parse(key, value)?,
            "cut_half_height" => self.binarize.cut_half_height = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "momentum" => self.train.momentum = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "label_scale" => self.train.label_scale = parse(key, value)?,
            "width_divisor" => self.train.width_divisor = parse(key, value)?,
            "bn_momentum" => self.train.bn_momentum = parse(key, value)?,
            "scene_height" => self.scene.height = parse(key, value)?,
            "scene_width" => self.scene.width = parse(key, value)?,
            "scene_complexity" => self.scene.complexity = parse(key, value)?,
            "scene_noise" => self.scene.noise = parse(key, value)?,
            "scene_gaps" => self.scene.gap_count = parse(key, value)?,
            "scene_antennas" => self.scene.antenna_count = parse(key, value)?,
            "scene_count" => self.scene_count = parse(key, value)?,
            "per_image" => self.per_image = parse(key, value)?,
            "jitter" => self.jitter = parse(key, value)?,
            other => return Err(format!("unknown config key: {other}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.completion.validate()?;
        self.binarize.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Full resolved dump; parsing it back yields an identical config.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("threads", self.threads.to_string());
        kv("seed_threshold", self.completion.seed_threshold.to_string());
        kv("checker_cell", self.completion.checker_cell.to_string());
        kv("step_p1", self.completion.step_probabilities[0].to_string());
        kv("step_p2", self.completion.step_probabilities[1].to_string());
        kv("step_p3", self.completion.step_probabilities[2].to_string());
        kv(
            "bad_prob_threshold",
            self.completion.bad_prob_threshold.to_string(),
        );
        kv("loop_grace", self.completion.loop_grace.to_string());
        kv(
            "max_steps_per_tracer",
            self.completion.max_steps_per_tracer.unwrap_or(0).to_string(),
        );
        kv("th_low", self.binarize.th_low.to_string());
        kv("delta_th", self.binarize.delta_th.to_string());
        kv("gap_tolerance", self.binarize.gap_tolerance.to_string());
        kv("prune_cap", self.binarize.prune_cap.to_string());
        kv("fill_hole_area", self.binarize.fill_hole_area.to_string());
        kv("flank_rows", self.binarize.flank_rows.to_string());
        kv("cut_half_height", self.binarize.cut_half_height.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("momentum", self.train.momentum.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("epochs", self.train.epochs.to_string());
        kv("label_scale", self.train.label_scale.to_string());
        kv("width_divisor", self.train.width_divisor.to_string());
        kv("bn_momentum", self.train.bn_momentum.to_string());
        kv("scene_height", self.scene.height.to_string());
        kv("scene_width", self.scene.width.to_string());
        kv("scene_complexity", self.scene.complexity.to_string());
        kv("scene_noise", self.scene.noise.to_string());
        kv("scene_gaps", self.scene.gap_count.to_string());
        kv("scene_antennas", self.scene.antenna_count.to_string());
        kv("scene_count", self.scene_count.to_string());
        kv("per_image", self.per_image.to_string());
        kv("jitter", self.jitter.to_string());
        s
    }
}
