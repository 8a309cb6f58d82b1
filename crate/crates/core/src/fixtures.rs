//! Embedded example models.
//!
//! * `jaquette`: three states; only state `1` offers a choice between a fair gamble
//!   `b1` (0 or 8 next step) and a safer gamble `b2`; discount 1/2.
//! * `invariant_model`: two states whose transition rows are identical, costs 0 and 1.
//! * `inventory_toy`: capacity-2 inventory with order-up-to choices and random demand.

use crate::io::from_json_str;
use crate::mdp::FiniteMdp;

pub const JAQUETTE_JSON: &str = include_str!("../fixtures/jaquette.json");
pub const INVARIANT_JSON: &str = include_str!("../fixtures/invariant_model.json");
pub const INVENTORY_JSON: &str = include_str!("../fixtures/inventory_toy.json");

/// `(name, file contents)` of every embedded fixture.
pub const ALL: [(&str, &str); 3] =
    [("jaquette", JAQUETTE_JSON), ("invariant_model", INVARIANT_JSON), ("inventory_toy", INVENTORY_JSON)];

pub fn by_name(name: &str) -> Option<FiniteMdp<f64>> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    ALL.iter().find(|(n, _)| *n == name).map(|(_, text)| from_json_str(text).expect("embedded fixture is valid"))
}

pub fn jaquette() -> FiniteMdp<f64> {
    from_json_str(JAQUETTE_JSON).expect("embedded fixture is valid")
}

pub fn invariant_model() -> FiniteMdp<f64> {
    from_json_str(INVARIANT_JSON).expect("embedded fixture is valid")
}

pub fn inventory_toy() -> FiniteMdp<f64> {
    from_json_str(INVENTORY_JSON).expect("embedded fixture is valid")
}
