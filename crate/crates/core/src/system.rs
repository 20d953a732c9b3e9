//! A kinetic nonholonomic system: metric, constraint frame, parameters,
//! sampling box and an optional symmetry action.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ConfigSpace, Frame, Metric, PointGeometry, VectorField};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

impl Domain {
    pub fn cube(n: usize, lo: f64, hi: f64, points: usize) -> Self {
        Domain {
            lo: vec![lo; n],
            hi: vec![hi; n],
            points,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn with_points(&self, points: usize) -> Self {
        Domain {
            points,
            ..self.clone()
        }
    }

    /// Axis-aligned lattice, last coordinate varying fastest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        lattice(&self.lo, &self.hi, self.points)
    }
}

pub fn lattice(lo: &[f64], hi: &[f64], points: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| {
            if points <= 1 || a == b {
                vec![0.5 * (a + b)]
            } else {
                (0..points)
                    .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for x in axis {
                let mut q = p.clone();
                q.push(*x);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Free action of a group whose orbits are parametrized by the non-reduced
/// coordinates. `section` fixes those coordinates to pick a representative.
#[derive(Clone, Debug)]
pub struct GroupAction {
    pub generators: Vec<VectorField>,
    pub generator_names: Vec<String>,
    /// Coordinate indices of the reduced (shape) coordinates, in the order
    /// of the constraint fields they lift.
    pub reduced: Vec<usize>,
    /// Values of the remaining coordinates on the section, indexed by
    /// coordinate.
    pub section: Vec<f64>,
}

impl GroupAction {
    pub fn lift(&self, r: &[f64]) -> Vec<f64> {
        let mut q = self.section.clone();
        for (k, idx) in self.reduced.iter().enumerate() {
            q[*idx] = r[k];
        }
        q
    }

    /// A second representative of the same reduced point, offset along the
    /// fibre coordinates.
    pub fn shifted_lift(&self, r: &[f64], offset: f64) -> Vec<f64> {
        let mut q = self.lift(r);
        for (i, x) in q.iter_mut().enumerate() {
            if !self.reduced.contains(&i) {
                *x += offset;
            }
        }
        q
    }

    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        self.reduced.iter().map(|i| q[*i]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FramedSystem {
    pub name: String,
    pub space: ConfigSpace,
    pub metric: Metric,
    pub frame: Frame,
    pub params: BTreeMap<String, f64>,
    pub domain: Domain,
    pub group: Option<GroupAction>,
    /// Free-form labels carried into reports, e.g. `regularized`.
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub points: usize,
    pub max_orthogonality_defect: f64,
    pub min_frame_singular_value: f64,
    pub metric_positive_definite: bool,
    pub blocks_positive_definite: bool,
}

impl FramedSystem {
    pub fn n(&self) -> usize {
        self.frame.n()
    }
    pub fn m(&self) -> usize {
        self.frame.m()
    }
    pub fn k(&self) -> usize {
        self.frame.k()
    }

    pub fn geometry(&self, q: &[f64]) -> Result<PointGeometry> {
        PointGeometry::new(&self.frame, &self.metric, q)
    }

    pub fn grid(&self) -> Vec<Vec<f64>> {
        self.domain.grid()
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn has_label(&self, l: &str) -> bool {
        self.labels.iter().any(|x| x == l)
    }

    pub fn validate(&self, points: &[Vec<f64>]) -> Result<ValidationReport> {
        let mut rep = ValidationReport {
            points: points.len(),
            max_orthogonality_defect: 0.0,
            min_frame_singular_value: f64::INFINITY,
            metric_positive_definite: true,
            blocks_positive_definite: true,
        };
        let (m, n) = (self.m(), self.n());
        for q in points {
            let pg = self.geometry(q)?;
            let gai = linalg::sub_block(&pg.metric.gf, 0..m, m..n);
            rep.max_orthogonality_defect = rep.max_orthogonality_defect.max(gai.amax());
            rep.min_frame_singular_value = rep
                .min_frame_singular_value
                .min(linalg::min_singular_value(&pg.frame.e));
            if !linalg::is_positive_definite(&pg.metric.g) {
                rep.metric_positive_definite = false;
            }
            if !linalg::is_positive_definite(&pg.g_ab())
                || (n > m && !linalg::is_positive_definite(&pg.g_ij()))
            {
                rep.blocks_positive_definite = false;
            }
        }
        Ok(rep)
    }
}
