/// Decimal text of `x` rounded to 9 significant digits.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific text parses");
    rounded.to_string()
}
