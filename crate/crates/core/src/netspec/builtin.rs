//! Built-in networks. Geometry is taken from the published architectures;
//! the precision profiles were measured on the trained models.

use super::NetworkSpec;

const SOURCES: [(&str, &str); 6] = [
    ("NiN", include_str!("../../data/networks/nin.toml")),
    ("AlexNet", include_str!("../../data/networks/alexnet.toml")),
    (
        "GoogLeNet",
        include_str!("../../data/networks/googlenet.toml"),
    ),
    ("VGGS", include_str!("../../data/networks/vggs.toml")),
    ("VGGM", include_str!("../../data/networks/vggm.toml")),
    ("VGG19", include_str!("../../data/networks/vgg19.toml")),
];

pub const BUILTIN_NAMES: [&str; 6] = ["NiN", "AlexNet", "GoogLeNet", "VGGS", "VGGM", "VGG19"];

fn parse(name: &str, text: &str) -> NetworkSpec {
    NetworkSpec::from_toml_str(text, &format!("builtin:{name}"))
        .unwrap_or_else(|e| panic!("built-in network {name} is invalid: {e}"))
}

/// All built-in networks in their canonical order.
pub fn builtin_networks() -> Vec<NetworkSpec> {
    SOURCES
        .iter()
        .map(|(name, text)| parse(name, text))
        .collect()
}

/// Looks up a built-in network by name, ignoring case.
pub fn builtin_network(name: &str) -> Option<NetworkSpec> {
    SOURCES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name.trim()))
        .map(|(n, text)| parse(n, text))
}
