use crate::error::{Error, Result};
use crate::geometry::{
    build_miura_pattern, clamped_nodes, dihedral_angle, fold_miura, FoldedMesh, HingeKind, Vec3,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Payload position labels, left to right along the top edge.
pub const STATION_LABELS: [char; 8] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];

/// Heaviest payload the sheet carries without buckling.
pub const MAX_PAYLOAD_G: f64 = 18.0;

/// Physical parameters of the simulated sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub rows: usize,
    pub cols: usize,
    pub panel_a_mm: f64,
    pub panel_b_mm: f64,
    pub gamma_deg: f64,
    pub fold_angle_deg: f64,
    pub sheet_mass_g: f64,
    /// N/m, every bar.
    pub bar_stiffness: f64,
    /// N·mm/rad.
    pub crease_hinge_stiffness: f64,
    /// N·mm/rad; softer than the creases.
    pub facet_hinge_stiffness: f64,
    /// 1/s, mass-proportional damping. The default damps the 3 Hz mode to
    /// about 40 % of critical, so the sheet settles within a few cycles of
    /// a change in excitation, as a paper sheet does.
    pub rayleigh_alpha: f64,
    /// s, stiffness-proportional damping on bar elongation rates.
    pub rayleigh_beta: f64,
    /// m/s², acting along -y (up the sheet is up in the lab).
    pub gravity: f64,
    /// Integrator step, s.
    pub dt: f64,
    /// Any nodal force above this magnitude (N) aborts the run.
    pub force_bound: f64,
    /// Seeded random offset of free nodes at t = 0, mm.
    pub initial_jitter_mm: f64,
}

/// Crease stiffness from `calibrate`: the sheet carrying 10 g at station
/// `a` has its fundamental mode at 3 Hz.
pub const CALIBRATED_CREASE_STIFFNESS: f64 = 51.23;

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 7,
            panel_a_mm: 20.0,
            panel_b_mm: 20.0,
            gamma_deg: 60.0,
            fold_angle_deg: 50.0,
            sheet_mass_g: 6.0,
            bar_stiffness: 2000.0,
            crease_hinge_stiffness: CALIBRATED_CREASE_STIFFNESS,
            facet_hinge_stiffness: CALIBRATED_CREASE_STIFFNESS / 5.0,
            rayleigh_alpha: 15.0,
            rayleigh_beta: 2e-6,
            gravity: 9.81,
            dt: 1e-4,
            force_bound: 100.0,
            initial_jitter_mm: 0.01,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sheet_mass_g", self.sheet_mass_g),
            ("bar_stiffness", self.bar_stiffness),
            ("crease_hinge_stiffness", self.crease_hinge_stiffness),
            ("facet_hinge_stiffness", self.facet_hinge_stiffness),
            ("dt", self.dt),
            ("force_bound", self.force_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("rayleigh_alpha", self.rayleigh_alpha),
            ("rayleigh_beta", self.rayleigh_beta),
            ("gravity", self.gravity),
            ("initial_jitter_mm", self.initial_jitter_mm),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.facet_hinge_stiffness >= self.crease_hinge_stiffness {
            return Err(Error::InvalidParameter(
                "facet hinges must be softer than crease hinges".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("model params serialize");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub mass_g: f64,
    pub position: char,
}

impl PayloadSpec {
    pub fn new(mass_g: f64, position: char) -> Self {
        Self { mass_g, position }
    }
}

/// Index of a position label in `a..=h`.
pub fn station_index(label: char) -> Result<usize> {
    STATION_LABELS
        .iter()
        .position(|&l| l == label)
        .ok_or_else(|| Error::InvalidPosition(label.to_string()))
}

/// Station location along the top edge in column units.
///
/// The eight labels are equispaced from the first to the last top-row
/// vertex, so `a` and `h` sit on the corner vertices.
pub fn station_coordinate(label: char, cols: usize) -> Result<f64> {
    let k = station_index(label)?;
    Ok(k as f64 * (cols - 1) as f64 / (STATION_LABELS.len() - 1) as f64)
}

/// `(column, share)` pairs splitting a station's mass between the two
/// flanking top-row vertices.
pub fn station_weights(label: char, cols: usize) -> Result<Vec<(usize, f64)>> {
    let s = station_coordinate(label, cols)?;
    let lo = s.floor();
    let frac = s - lo;
    let lo = lo as usize;
    if frac < 1e-12 || lo + 1 >= cols {
        Ok(vec![(lo.min(cols - 1), 1.0)])
    } else {
        Ok(vec![(lo, 1.0 - frac), (lo + 1, frac)])
    }
}

/// Folded sheet with lumped masses, springs, damping and boundary data.
/// Lengths are stored in metres, masses in kilograms.
#[derive(Debug, Clone)]
pub struct ReservoirModel {
    pub params: ModelParams,
    pub mesh: FoldedMesh,
    /// Sheet mass per node, kg.
    pub node_mass: f64,
    /// Total lumped mass per node including the payload, kg.
    pub masses: Vec<f64>,
    pub clamped: Vec<usize>,
    pub is_clamped: Vec<bool>,
    pub payload: Option<PayloadSpec>,
    pub(crate) rest: Vec<Vec3>,
    pub(crate) rest_lengths: Vec<f64>,
    /// Per-hinge stiffness, N·m/rad.
    pub(crate) hinge_stiffness: Vec<f64>,
    /// Rest angles re-evaluated on the SI coordinates so the rest mesh is
    /// exactly force free.
    pub(crate) hinge_rest: Vec<f64>,
    model_hash: String,
}

impl ReservoirModel {
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let pattern = build_miura_pattern(
            params.rows,
            params.cols,
            params.panel_a_mm,
            params.panel_b_mm,
            params.gamma_deg,
        )?;
        let mesh = fold_miura(&pattern, params.fold_angle_deg)?;
        Ok(Self::from_mesh(params.clone(), mesh))
    }

    fn from_mesh(params: ModelParams, mesh: FoldedMesh) -> Self {
        let n = mesh.node_count();
        let node_mass = params.sheet_mass_g * 1e-3 / n as f64;
        let clamped = clamped_nodes(&mesh);
        let mut is_clamped = vec![false; n];
        for &c in &clamped {
            is_clamped[c] = true;
        }
        let rest: Vec<Vec3> = (0..n).map(|i| mesh.position(i) * 1e-3).collect();
        let rest_lengths = mesh
            .bars
            .iter()
            .map(|&[i, j]| (rest[j] - rest[i]).norm())
            .collect();
        let hinge_stiffness = mesh
            .hinges
            .iter()
            .map(|h| match h.kind {
                HingeKind::Crease => params.crease_hinge_stiffness * 1e-3,
                HingeKind::Facet => params.facet_hinge_stiffness * 1e-3,
            })
            .collect();
        let hinge_rest = mesh
            .hinges
            .iter()
            .map(|h| {
                let [i, j, k, l] = h.nodes();
                dihedral_angle(&rest[i], &rest[j], &rest[k], &rest[l])
            })
            .collect();
        let model_hash = params.hash();
        Self {
            params,
            masses: vec![node_mass; n],
            mesh,
            node_mass,
            clamped,
            is_clamped,
            payload: None,
            rest,
            rest_lengths,
            hinge_stiffness,
            hinge_rest,
            model_hash,
        }
    }

    pub fn node_count(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn rest_positions(&self) -> &[Vec3] {
        &self.rest
    }

    pub fn rest_lengths(&self) -> &[f64] {
        &self.rest_lengths
    }

    pub fn hinge_stiffness(&self) -> &[f64] {
        &self.hinge_stiffness
    }

    /// Hash of the unloaded model's parameters.
    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    /// The same sheet without a payload.
    pub fn unloaded(&self) -> Self {
        let mut m = self.clone();
        m.masses = vec![self.node_mass; self.node_count()];
        m.payload = None;
        m
    }
}

/// Returns a copy of `model` carrying `spec` on the top edge, replacing any
/// payload it already had.
pub fn attach_payload(model: &ReservoirModel, spec: PayloadSpec) -> Result<ReservoirModel> {
    let weights = station_weights(spec.position, model.mesh.cols)?;
    if !(spec.mass_g >= 0.0 && spec.mass_g.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "payload mass must be non-negative, got {} g",
            spec.mass_g
        )));
    }
    if spec.mass_g > MAX_PAYLOAD_G {
        log::warn!(
            "payload of {} g exceeds {MAX_PAYLOAD_G} g; the physical sheet buckles in this range",
            spec.mass_g
        );
    }
    let mut m = model.unloaded();
    if spec.mass_g == 0.0 {
        return Ok(m);
    }
    let top = model.mesh.rows - 1;
    for (col, share) in weights {
        m.masses[model.mesh.node(top, col)] += spec.mass_g * 1e-3 * share;
    }
    m.payload = Some(spec);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ReservoirModel {
        ReservoirModel::from_params(&ModelParams::default()).unwrap()
    }

    #[test]
    fn sheet_weighs_six_grams() {
        let m = model();
        assert!((m.total_mass() - 6e-3).abs() < 1e-15);
        assert_eq!(m.clamped.len(), 3);
    }

    #[test]
    fn payload_at_corner_lands_on_top_left_node() {
        let m = model();
        let loaded = attach_payload(&m, PayloadSpec::new(17.0, 'a')).unwrap();
        let n = m.mesh.node(3, 0);
        assert!((loaded.masses[n] - m.masses[n] - 17e-3).abs() < 1e-15);
        let other: f64 = (0..28).filter(|&i| i != n).map(|i| loaded.masses[i] - m.masses[i]).sum();
        assert_eq!(other, 0.0);
    }

    #[test]
    fn mass_is_additive() {
        let loaded = attach_payload(&model(), PayloadSpec::new(12.0, 'd')).unwrap();
        assert!((loaded.total_mass() - 18e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_payload_is_identity() {
        let m = model();
        let loaded = attach_payload(&m, PayloadSpec::new(0.0, 'c')).unwrap();
        assert_eq!(loaded.masses, m.masses);
        assert!(loaded.payload.is_none());
    }

    #[test]
    fn unknown_label_rejected() {
        assert!(matches!(
            attach_payload(&model(), PayloadSpec::new(5.0, 'z')),
            Err(Error::InvalidPosition(_))
        ));
    }

    #[test]
    fn heavy_payload_is_only_a_warning() {
        assert!(attach_payload(&model(), PayloadSpec::new(25.0, 'h')).is_ok());
    }

    #[test]
    fn stations_span_top_edge() {
        assert_eq!(station_weights('a', 7).unwrap(), vec![(0, 1.0)]);
        assert_eq!(station_weights('h', 7).unwrap(), vec![(6, 1.0)]);
        let b = station_weights('b', 7).unwrap();
        assert_eq!(b[0].0, 0);
        assert_eq!(b[1].0, 1);
        assert!((b[1].1 - 6.0 / 7.0).abs() < 1e-12);
        assert!(station_coordinate('d', 7).unwrap() < 3.0);
        assert!(station_coordinate('e', 7).unwrap() > 3.0);
    }

    #[test]
    fn facet_must_be_softer() {
        let p = ModelParams { facet_hinge_stiffness: 2.0, crease_hinge_stiffness: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
