use crate::error::{invalid, Result};

/// Width and resolution preset shared by every builder.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleProfile {
    pub name: String,
    /// Filter counts, one list per stage; each stage ends in a pooling step.
    pub stages: Vec<Vec<usize>>,
    pub input_extent: usize,
    pub frames: usize,
    /// Width of the hidden affine layers in the classifier heads.
    pub head_width: usize,
    /// Generator stem width followed by its four encoder widths.
    pub generator_widths: [usize; 5],
    pub critic_widths: [usize; 3],
    pub critic_dropout: f64,
}

impl ScaleProfile {
    pub fn toy() -> Self {
        Self {
            name: "toy".into(),
            stages: vec![vec![8], vec![16], vec![32, 32], vec![64, 64]],
            input_extent: 32,
            frames: 3,
            head_width: 64,
            generator_widths: [8, 12, 16, 24, 32],
            critic_widths: [8, 16, 32],
            critic_dropout: 0.1,
        }
    }

    pub fn full() -> Self {
        Self {
            name: "full".into(),
            stages: vec![vec![64], vec![128], vec![256, 256], vec![512, 512], vec![512, 512]],
            input_extent: 112,
            frames: 3,
            head_width: 256,
            generator_widths: [64, 64, 128, 256, 512],
            critic_widths: [64, 128, 256],
            critic_dropout: 0.1,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "full" => Ok(Self::full()),
            other => Err(invalid(format!("unknown scale profile {other:?} (expected toy or full)"))),
        }
    }

    pub fn with_input_extent(mut self, extent: usize) -> Self {
        self.input_extent = extent;
        self
    }

    pub fn widths(&self) -> impl Iterator<Item = usize> + '_ {
        self.stages.iter().flatten().copied()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages.iter().any(|s| s.is_empty()) {
            return Err(invalid(format!("profile {}: every stage needs at least one width", self.name)));
        }
        let widths: Vec<usize> = self.widths().collect();
        if widths.contains(&0) {
            return Err(invalid(format!("profile {}: filter counts must be positive", self.name)));
        }
        let widest = widths.iter().position(|&w| w == *widths.iter().max().unwrap()).unwrap_or(0);
        if widths[..=widest].windows(2).any(|p| p[1] < p[0]) {
            return Err(invalid(format!("profile {}: widths must not shrink before the widest stage", self.name)));
        }
        if self.input_extent == 0 || self.frames == 0 || self.head_width == 0 {
            return Err(invalid(format!("profile {}: extents and head width must be positive", self.name)));
        }
        if self.generator_widths.contains(&0) || self.critic_widths.contains(&0) {
            return Err(invalid(format!("profile {}: generator and critic widths must be positive", self.name)));
        }
        if !(0.0..1.0).contains(&self.critic_dropout) {
            return Err(invalid(format!("profile {}: critic dropout outside [0, 1)", self.name)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ScaleProfile::toy().validate().unwrap();
        ScaleProfile::full().validate().unwrap();
        assert!(ScaleProfile::named("huge").is_err());
    }

    #[test]
    fn shrinking_before_widest_is_rejected() {
        let mut p = ScaleProfile::toy();
        p.stages = vec![vec![16], vec![8], vec![32]];
        assert!(p.validate().is_err());
        p.stages = vec![vec![8], vec![32], vec![16]];
        p.validate().unwrap();
        p.stages = vec![vec![8], vec![0]];
        assert!(p.validate().is_err());
    }
}
