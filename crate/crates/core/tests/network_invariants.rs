use gasnet_core::fv_solver::{NetworkState, Simulator};
use gasnet_core::network::{Junction, KindSpec, Network, Pipe, PipeEnd};
use gasnet_core::{GasState, PressureLaw};
use proptest::prelude::*;

fn law() -> PressureLaw {
    PressureLaw::isentropic(1.0, 1.4).unwrap()
}

fn star(kind: &str) -> Network {
    let mut net = Network::new(0.0);
    for id in ["a", "b", "c"] {
        net.pipes.push(Pipe::new(id, 1.0, 12, law()));
    }
    net.junctions.push(Junction::new(
        "hub",
        &[("a", PipeEnd::End), ("b", PipeEnd::Start), ("c", PipeEnd::Start)],
        KindSpec::new(kind),
    ));
    net.add_boundary("wa", "a", PipeEnd::Start, KindSpec::new("wall"));
    net.add_boundary("wb", "b", PipeEnd::End, KindSpec::new("wall"));
    net.add_boundary("wc", "c", PipeEnd::End, KindSpec::new("wall"));
    net
}

fn advance(sim: &Simulator, mut state: NetworkState, steps: usize) -> NetworkState {
    for _ in 0..steps {
        let dt = sim.cfl_timestep(&state, 0.8).unwrap();
        state = sim.step(&state, dt).unwrap();
    }
    state
}

fn pipe_data() -> impl Strategy<Value = (f64, f64)> {
    (0.9f64..1.15, -0.1f64..0.1)
}

fn mirrored(cells: &[GasState]) -> Vec<GasState> {
    cells.iter().rev().map(GasState::mirrored).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_star_conserves_mass(
        kind in prop::sample::select(vec!["equal_pressure", "dynamic_pressure", "bernoulli", "energy_dissipating"]),
        data in prop::collection::vec(pipe_data(), 3),
    ) {
        let sim = Simulator::new(&star(kind)).unwrap();
        let profiles = data.iter().map(|(r, q)| vec![GasState::new(*r, *q).unwrap(); 12]).collect();
        let init = sim.initial_state(profiles).unwrap();
        let m0 = init.total_mass();
        let last = advance(&sim, init, 40);
        prop_assert!((last.total_mass() - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn reversing_a_pipe_mirrors_its_solution(
        left in prop::collection::vec(pipe_data(), 12),
        right in prop::collection::vec(pipe_data(), 12),
    ) {
        let mut net = Network::new(0.0);
        net.pipes.push(Pipe::new("a", 1.0, 12, law()));
        net.pipes.push(Pipe::new("b", 1.0, 12, law()));
        net.junctions.push(Junction::new("j", &[("a", PipeEnd::End), ("b", PipeEnd::Start)], KindSpec::new("equal_pressure")));
        net.add_boundary("wa", "a", PipeEnd::Start, KindSpec::new("wall"));
        net.add_boundary("wb", "b", PipeEnd::End, KindSpec::new("wall"));
        let a: Vec<GasState> = left.iter().map(|(r, q)| GasState::new(*r, *q).unwrap()).collect();
        let b: Vec<GasState> = right.iter().map(|(r, q)| GasState::new(*r, *q).unwrap()).collect();

        let sim = Simulator::new(&net).unwrap();
        let plain = advance(&sim, sim.initial_state(vec![a.clone(), b.clone()]).unwrap(), 30);

        let mut flipped = net.clone();
        flipped.reverse_pipe(1);
        let fsim = Simulator::new(&flipped).unwrap();
        let other = advance(&fsim, fsim.initial_state(vec![a, mirrored(&b)]).unwrap(), 30);

        let back = mirrored(&other.grids[1].cells);
        for (x, y) in plain.grids[0].cells.iter().zip(&other.grids[0].cells).chain(plain.grids[1].cells.iter().zip(&back)) {
            prop_assert!((x.rho - y.rho).abs() <= 1e-12 && (x.q - y.q).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_pipe_is_mirror_symmetric(data in prop::collection::vec(pipe_data(), 16)) {
        let mut net = Network::new(0.0);
        net.pipes.push(Pipe::new("p", 1.0, 16, law()).with_friction(0.3));
        net.add_boundary("l", "p", PipeEnd::Start, KindSpec::new("wall"));
        net.add_boundary("r", "p", PipeEnd::End, KindSpec::new("wall"));
        let sim = Simulator::new(&net).unwrap();
        let cells: Vec<GasState> = data.iter().map(|(r, q)| GasState::new(*r, *q).unwrap()).collect();
        let mut s = sim.initial_state(vec![cells.clone()]).unwrap();
        let mut m = sim.initial_state(vec![mirrored(&cells)]).unwrap();
        for _ in 0..30 {
            let dt = sim.cfl_timestep(&s, 0.8).unwrap();
            s = sim.step(&s, dt).unwrap();
            m = sim.step(&m, dt).unwrap();
        }
        for (x, y) in s.grids[0].cells.iter().zip(mirrored(&m.grids[0].cells)) {
            prop_assert!((x.rho - y.rho).abs() <= 1e-12 && (x.q - y.q).abs() <= 1e-12);
        }
    }
}
