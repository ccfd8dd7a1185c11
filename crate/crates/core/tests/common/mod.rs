#![allow(dead_code)]

use shiresim::scenario::parse_scenario;
use shiresim::Scenario;

pub const TWO_NIC: &str = include_str!("../data/two_nic.toml");

pub fn two_nic() -> Scenario {
    parse_scenario(TWO_NIC).expect("two_nic.toml parses")
}

/// Both APs cover the whole road, but rows of fence posts close to the road
/// cut each AP's line of sight for about a second every 8 m. The rows are
/// staggered so one AP is always visible, which makes the node bounce
/// between its NICs roughly every two seconds.
pub fn flapping_text() -> String {
    let mut s = String::from(
        r#"name = "fence"

[run]
duration = 100.0
seeds = [1]
path = "road"

[traffic]
start = 3.0

[[access_point]]
id = "north"
x = 100.0
y = 40.0
range = 150.0
wlan = "w-north"

[[access_point]]
id = "south"
x = 100.0
y = -40.0
range = 150.0
wlan = "w-south"

[[path]]
id = "road"
speed = 2.0
waypoints = [[0.0, 0.0], [200.0, 0.0]]
"#,
    );
    for i in 0..25 {
        let xn = 8.0 * i as f64 + 10.0;
        let xs = xn + 4.0;
        s.push_str(&format!(
            "\n[[obstacle]]\nid = \"n{i}\"\nvertices = [[{xn}, 5.0], [{}, 5.0], [{}, 6.5], [{xn}, 6.5]]\n",
            xn + 1.5,
            xn + 1.5
        ));
        s.push_str(&format!(
            "\n[[obstacle]]\nid = \"s{i}\"\nvertices = [[{xs}, -6.5], [{}, -6.5], [{}, -5.0], [{xs}, -5.0]]\n",
            xs + 1.5,
            xs + 1.5
        ));
    }
    s
}

pub fn flapping() -> Scenario {
    parse_scenario(&flapping_text()).expect("fence scenario parses")
}
