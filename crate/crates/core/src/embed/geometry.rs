use serde::{Deserialize, Serialize};

use super::EmbedError;

/// Number of `patch_px`-sized tokens a square image is cut into.
pub fn patch_token_count(image_px: u32, patch_px: u32) -> Result<u32, EmbedError> {
    if patch_px == 0 || image_px == 0 || image_px % patch_px != 0 {
        return Err(EmbedError::NotDivisible { image_px, patch_px });
    }
    let side = image_px / patch_px;
    Ok(side * side)
}

/// Crop sizes of the self-distillation views together with the training
/// tile geometry they are cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    pub local_crop_px: u32,
    pub global_crop_px: u32,
    pub patch_px: u32,
    pub train_tile_px: u32,
    pub mpp_choices: Vec<f64>,
}

impl ViewConfig {
    /// Standard-resolution pretraining views.
    pub fn standard() -> Self {
        ViewConfig {
            local_crop_px: 98,
            global_crop_px: 224,
            patch_px: 14,
            train_tile_px: 256,
            mpp_choices: vec![2.0, 1.0, 0.5, 0.25],
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        patch_token_count(self.global_crop_px, self.patch_px).map(|_| ())
    }

    /// Physical side lengths (µm) of the training tile at each spacing.
    pub fn tile_extents_um(&self) -> Vec<f64> {
        self.mpp_choices
            .iter()
            .map(|m| self.train_tile_px as f64 * m)
            .collect()
    }
}

/// High-resolution post-training views: crops scaled by 12/7 (98→168,
/// 224→392), tiles doubled and spacings halved so every tile covers the
/// same tissue area as before.
pub fn highres_view_config(base: &ViewConfig) -> Result<ViewConfig, EmbedError> {
    if *base != ViewConfig::standard() {
        return Err(EmbedError::NotStandardConfig(base.clone()));
    }
    let out = ViewConfig {
        local_crop_px: 168,
        global_crop_px: 392,
        patch_px: base.patch_px,
        train_tile_px: base.train_tile_px * 2,
        mpp_choices: base.mpp_choices.iter().map(|m| m / 2.0).collect(),
    };
    out.validate()?;
    let mut before = base.tile_extents_um();
    let mut after = out.tile_extents_um();
    before.sort_by(f64::total_cmp);
    after.sort_by(f64::total_cmp);
    assert_eq!(before, after, "physical tile extents must be preserved");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub per_gpu_batch: u32,
    pub gpu_count: u32,
    pub grad_accum_steps: u32,
    pub base_lr: f64,
    pub iterations: u64,
}

impl ScheduleConfig {
    /// Standard-resolution pretraining: 12 per GPU on 32 GPUs, 2 accumulation steps.
    pub fn pretraining() -> Self {
        ScheduleConfig {
            per_gpu_batch: 12,
            gpu_count: 32,
            grad_accum_steps: 2,
            base_lr: 3.5e-4,
            iterations: 1_000_000,
        }
    }

    /// High-resolution post-training: 6 per GPU on 48 GPUs, 4 accumulation steps.
    pub fn highres_posttraining() -> Self {
        ScheduleConfig {
            per_gpu_batch: 6,
            gpu_count: 48,
            grad_accum_steps: 4,
            base_lr: 1e-4,
            iterations: 120_000,
        }
    }

    /// Ablation runs: 64 per GPU on 4 GPUs, 3 accumulation steps. The
    /// learning rate is not published for these runs; the pretraining
    /// rate is used.
    pub fn ablation() -> Self {
        ScheduleConfig {
            per_gpu_batch: 64,
            gpu_count: 4,
            grad_accum_steps: 3,
            base_lr: 3.5e-4,
            iterations: 500_000,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.per_gpu_batch == 0 || self.gpu_count == 0 || self.grad_accum_steps == 0 || self.iterations == 0 {
            return Err(EmbedError::InvalidConfig(format!("counts must be positive: {self:?}")));
        }
        if !(self.base_lr > 0.0) {
            return Err(EmbedError::InvalidConfig(format!("base_lr must be positive: {}", self.base_lr)));
        }
        Ok(())
    }

    /// Samples seen per optimizer step.
    pub fn effective_batch(&self) -> u64 {
        effective_batch(self)
    }

    /// Tiles drawn over the whole schedule.
    pub fn total_tiles(&self) -> u64 {
        self.per_gpu_batch as u64 * self.gpu_count as u64 * self.iterations
    }
}

pub fn effective_batch(cfg: &ScheduleConfig) -> u64 {
    cfg.per_gpu_batch as u64 * cfg.gpu_count as u64 * cfg.grad_accum_steps as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts() {
        assert_eq!(patch_token_count(224, 14).unwrap(), 256);
        assert_eq!(patch_token_count(392, 14).unwrap(), 784);
        assert_eq!(
            patch_token_count(224, 15).unwrap_err(),
            EmbedError::NotDivisible { image_px: 224, patch_px: 15 }
        );
        assert!(patch_token_count(224, 0).is_err());
    }

    #[test]
    fn highres_views() {
        let hr = highres_view_config(&ViewConfig::standard()).unwrap();
        assert_eq!(
            (hr.local_crop_px, hr.global_crop_px, hr.train_tile_px),
            (168, 392, 512)
        );
        assert_eq!(hr.mpp_choices, vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(hr.tile_extents_um(), vec![512.0, 256.0, 128.0, 64.0]);
        assert!(matches!(highres_view_config(&hr), Err(EmbedError::NotStandardConfig(_))));
    }

    #[test]
    fn schedules() {
        assert_eq!(ScheduleConfig::pretraining().effective_batch(), 768);
        assert_eq!(ScheduleConfig::highres_posttraining().effective_batch(), 1152);
        assert_eq!(ScheduleConfig::ablation().effective_batch(), 768);
        // 12 per GPU × 32 GPUs × 1M iterations
        assert_eq!(ScheduleConfig::pretraining().total_tiles(), 384_000_000);
        let mut bad = ScheduleConfig::pretraining();
        bad.gpu_count = 0;
        assert!(bad.validate().is_err());
    }
}
