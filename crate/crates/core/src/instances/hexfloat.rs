//! C99-style hexadecimal float text encoding (`%a`), exact for every finite `f64`.
//!
//! Infinities are written as `inf` / `-inf`. NaN is rejected on both sides
//! since no instance field may hold it.

/// Formats `value` as a hexadecimal float, e.g. `0x1.8p+1` for `3.0`.
pub fn format_hex(value: f64) -> String {
    if value.is_nan() {
        return "nan".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let bits = value.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & 0x000f_ffff_ffff_ffff;
    if exp_bits == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        (0u64, -1022i64)
    } else {
        (1u64, exp_bits - 1023)
    };
    let mut digits = format!("{mantissa:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let exp_sign = if exp >= 0 { "+" } else { "-" };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp_sign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{exp_sign}{}", exp.abs())
    }
}

/// Parses the output of [`format_hex`]. Also accepts plain decimal text so
/// hand-edited files stay readable.
pub fn parse_hex(text: &str) -> Result<f64, String> {
    let t = text.trim();
    match t {
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (negative, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) else {
        return t
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| format!("invalid real '{t}'"));
    };
    let (mant_text, exp_text) = hex
        .split_once(['p', 'P'])
        .ok_or_else(|| format!("missing exponent in '{t}'"))?;
    let exp: i64 = exp_text
        .parse()
        .map_err(|_| format!("invalid exponent in '{t}'"))?;
    let (int_text, frac_text) = mant_text.split_once('.').unwrap_or((mant_text, ""));
    if int_text.is_empty() || frac_text.len() > 13 {
        return Err(format!("malformed mantissa in '{t}'"));
    }
    let lead = u64::from_str_radix(int_text, 16).map_err(|_| format!("bad digits in '{t}'"))?;
    let frac = if frac_text.is_empty() {
        0
    } else {
        let raw = u64::from_str_radix(frac_text, 16).map_err(|_| format!("bad digits in '{t}'"))?;
        raw << (4 * (13 - frac_text.len()))
    };
    let bits = match lead {
        0 if frac == 0 => 0u64,
        0 => {
            if exp != -1022 {
                return Err(format!("non-canonical subnormal '{t}'"));
            }
            frac
        }
        1 => {
            let biased = exp + 1023;
            if !(1..=2046).contains(&biased) {
                return Err(format!("exponent out of range in '{t}'"));
            }
            ((biased as u64) << 52) | frac
        }
        _ => return Err(format!("non-normalized mantissa in '{t}'")),
    };
    let value = f64::from_bits(bits);
    Ok(if negative { -value } else { value })
}
