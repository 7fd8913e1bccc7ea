//! A qubit rotating under σx while dephasing under σz. Identical σz pulses
//! spaced τ apart cancel the rotation, leaving pure dephasing up to O(τ²).

use multitime::control::Pauli;
use multitime::linalg::{pauli_x, pauli_z, CMatrix};
use multitime::monotones::channel_information;
use multitime::process::{lindblad_segment, Channel, LindbladGenerator, QState, SEDynamics};

const GAMMA: f64 = 0.7;

fn rotate_and_dephase() -> LindbladGenerator {
    LindbladGenerator::new(pauli_x(), vec![pauli_z()], vec![GAMMA]).unwrap()
}

fn dephase() -> LindbladGenerator {
    LindbladGenerator::new(CMatrix::zeros(2, 2), vec![pauli_z()], vec![GAMMA]).unwrap()
}

/// Two τ-segments with a σz pulse before each, as slot controls.
fn pulsed_pair(tau: f64, pulsed: bool) -> Channel {
    let seg = lindblad_segment(&rotate_and_dephase(), tau).unwrap();
    let dynm = SEDynamics::new(2, 1, QState::maximally_mixed(1), vec![seg.clone(), seg], vec![tau, tau]).unwrap();
    let v = Pauli::Z.channel();
    let dynm = if pulsed { dynm.insert_controls([(1, &v)]).unwrap() } else { dynm };
    let c = dynm.resulting_channel().unwrap();
    if pulsed {
        Channel::compose(&v, &c).unwrap()
    } else {
        c
    }
}

fn error(tau: f64, pulsed: bool) -> f64 {
    let target = lindblad_segment(&dephase(), 2.0 * tau).unwrap();
    pulsed_pair(tau, pulsed).choi().max_abs_diff(target.choi())
}

#[test]
fn pulses_cancel_rotation_at_second_order() {
    let taus = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let pulsed: Vec<f64> = taus.iter().map(|&t| error(t, true)).collect();
    let free: Vec<f64> = taus.iter().map(|&t| error(t, false)).collect();
    for w in pulsed.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.6..4.4).contains(&ratio), "pulsed error ratio {ratio}");
    }
    for w in free.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.2).contains(&ratio), "unpulsed error ratio {ratio}");
    }
    for (p, t) in pulsed.iter().zip(taus) {
        assert!(*p < 5.0 * t * t, "error {p} at τ = {t}");
    }
}

#[test]
fn pulses_raise_channel_information() {
    for tau in [0.05, 0.1, 0.2] {
        let with = channel_information(&pulsed_pair(tau, true)).unwrap().value;
        let without = channel_information(&pulsed_pair(tau, false)).unwrap().value;
        assert!(with > without, "τ = {tau}: {with} vs {without}");
    }
}

#[test]
fn dephasing_target_keeps_the_z_axis() {
    let c = lindblad_segment(&dephase(), 3.0).unwrap();
    for k in 0..2 {
        let out = c.apply(&QState::basis(2, k)).unwrap();
        assert!(out.matrix().max_abs_diff(QState::basis(2, k).matrix()) < 1e-12);
    }
}
