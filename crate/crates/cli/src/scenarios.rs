//! Scenarios compiled into the binary.

pub const BUNDLED: &[(&str, &str)] = &[
    ("fig1_desk", include_str!("../scenarios/fig1_desk.toml")),
    ("fig1_mean_desk", include_str!("../scenarios/fig1_mean_desk.toml")),
    (
        "weights_sqrt_rank_desk",
        include_str!("../scenarios/weights_sqrt_rank_desk.toml"),
    ),
    ("weights_unit_desk", include_str!("../scenarios/weights_unit_desk.toml")),
    ("weights_rank_desk", include_str!("../scenarios/weights_rank_desk.toml")),
    ("fig3_basic_desk", include_str!("../scenarios/fig3_basic_desk.toml")),
    (
        "fig3_corrected_desk",
        include_str!("../scenarios/fig3_corrected_desk.toml"),
    ),
    ("fig4_desk", include_str!("../scenarios/fig4_desk.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
