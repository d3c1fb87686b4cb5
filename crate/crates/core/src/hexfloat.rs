//! Exact text encoding of `f64` as C99-style hexadecimal literals.

pub fn to_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    format!("{sign}0x{lead}.{mant:013x}p{e:+}")
}

pub fn from_hex(s: &str) -> Option<f64> {
    match s {
        "nan" => return Some(f64::NAN),
        "inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let body = body.strip_prefix("0x")?;
    let (mant_str, exp_str) = body.split_once('p')?;
    let (int_part, frac_part) = mant_str.split_once('.').unwrap_or((mant_str, ""));
    let lead = u64::from_str_radix(int_part, 16).ok()?;
    let frac = if frac_part.is_empty() { 0 } else { u64::from_str_radix(frac_part, 16).ok()? };
    let frac_bits = 4 * frac_part.len() as i32;
    let e: i32 = exp_str.parse().ok()?;
    let value = (lead as f64 + frac as f64 * 2f64.powi(-frac_bits)) * 2f64.powi(e);
    Some(if neg { -value } else { value })
}
