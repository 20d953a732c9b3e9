//! Shared fixtures for the benchmarks.

use geoext_core::systems::{builtin, Params};
use geoext_core::{Candidate, FramedSystem, State};

pub fn system(name: &str, params: &[(&str, &str)]) -> FramedSystem {
    let p: Params = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    builtin(name, &p).expect("built-in system")
}

pub fn particle() -> FramedSystem {
    system("particle", &[("rho", "y")])
}

pub fn particle_candidate(s: &FramedSystem) -> Candidate {
    Candidate::from_exprs(s, &[(("x".into(), "z".into()), "-y".into())], "-0.5*ln(1+y^2)")
        .expect("candidate")
}

pub fn particle_state() -> State {
    State::new(vec![0.0, 1.0, 0.0], vec![1.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let s = particle();
        assert_eq!(s.n(), 3);
        particle_candidate(&s);
        assert_eq!(particle_state().v.len(), s.m());
    }
}
