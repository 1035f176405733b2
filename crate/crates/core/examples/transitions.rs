//! Enumerates the transitions out of one state and applies each of them.

use replica_decay::model::{apply_event, enumerate_transitions, total_rate, ModelParams, NetworkState};

pub fn run_example() -> replica_decay::Result<()> {
    let params = ModelParams::new(3, 1.0, 0.1, 2.0, 0.0, 10)?;
    // x = (lost, one copy, two copies, three copies)
    let state = NetworkState::new(vec![2, 3, 5, 10])?;
    state.validate(&params)?;
    println!("state {:?}, total rate {}", state.counts(), total_rate(&params, &state));
    for event in enumerate_transitions(&params, &state)? {
        let next = apply_event(&state, &event)?;
        println!("{} at rate {:.3} -> {:?}", event.kind, event.rate, next.counts());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}
