fn main() {
    let cfg = convoy::config::standard_scenario(6.0, convoy::config::standard_optimized_policy(), 7);
    println!("{}", cfg.to_toml_string().unwrap());
}
