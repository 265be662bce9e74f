use serde::{Deserialize, Serialize};

/// Every threshold, window and geometric parameter the engine uses.
///
/// Defaults reproduce the published re-identification constants; the rest
/// are desk-scale choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Static re-ID: IoU strictly above this matches regardless of category.
    pub static_iou: f64,
    /// Static re-ID: MaxIoS strictly above this matches when categories agree.
    pub static_maxios: f64,
    /// Dynamic re-ID: volume similarity strictly above this ...
    pub dynamic_vol_sim: f64,
    /// ... and visual similarity strictly above this.
    pub dynamic_visual: f64,
    /// Entries whose probed appearance scores below this are marked dynamic.
    pub split_visual: f64,
    pub static_window: u32,
    pub dynamic_window: u32,
    /// Fraction of points dropped at each end when lifting.
    pub lift_trim: f64,
    pub occlusion_margin: f64,
    pub occluded_frac: f64,
    /// On/Upholds contact tolerance in meters.
    pub contact_eps: f64,
    /// In/Contains: fraction of the inner box that must overlap the outer one.
    pub containment: f64,
    /// Single-linkage cutoff for spatial localisation clusters, meters.
    pub cluster_cutoff: f64,
    pub k_objects: usize,
    pub k_frames: usize,
    pub k_places: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            static_iou: 0.2,
            static_maxios: 0.2,
            dynamic_vol_sim: 0.7,
            dynamic_visual: 0.45,
            split_visual: 0.45,
            static_window: 10,
            dynamic_window: 2,
            lift_trim: 0.10,
            occlusion_margin: 0.10,
            occluded_frac: 0.5,
            contact_eps: 0.05,
            containment: 0.8,
            cluster_cutoff: 1.5,
            k_objects: 10,
            k_frames: 5,
            k_places: 3,
        }
    }
}

impl MemoryConfig {
    /// Returns the name of the first out-of-range field.
    pub fn validate(&self) -> Result<(), &'static str> {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        let checks: [(&'static str, bool); 16] = [
            ("static_iou", unit(self.static_iou)),
            ("static_maxios", unit(self.static_maxios)),
            ("dynamic_vol_sim", unit(self.dynamic_vol_sim)),
            ("dynamic_visual", self.dynamic_visual.is_finite() && (-1.0..=1.0).contains(&self.dynamic_visual)),
            ("split_visual", self.split_visual.is_finite() && (-1.0..=1.0).contains(&self.split_visual)),
            ("static_window", self.static_window >= 1),
            ("dynamic_window", self.dynamic_window >= 1),
            ("lift_trim", self.lift_trim.is_finite() && (0.0..0.5).contains(&self.lift_trim)),
            ("occlusion_margin", self.occlusion_margin.is_finite() && self.occlusion_margin >= 0.0),
            ("occluded_frac", unit(self.occluded_frac)),
            ("contact_eps", self.contact_eps.is_finite() && self.contact_eps >= 0.0),
            ("containment", unit(self.containment) && self.containment > 0.0),
            ("cluster_cutoff", self.cluster_cutoff.is_finite() && self.cluster_cutoff >= 0.0),
            ("k_objects", self.k_objects >= 1),
            ("k_frames", self.k_frames >= 1),
            ("k_places", self.k_places >= 1),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(name),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        MemoryConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_window_named() {
        let cfg = MemoryConfig { static_window: 0, ..Default::default() };
        assert_eq!(cfg.validate(), Err("static_window"));
    }
}
