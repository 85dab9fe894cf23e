//! Number/string conversions with JavaScript formatting rules.

/// `Number.prototype.toString()` with radix 10.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Infinity" } else { "-Infinity" }.into();
    }
    let neg = x < 0.0;
    // Rust prints the shortest round-tripping digits in `{:e}`.
    let sci = format!("{:e}", x.abs());
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let k = digits.len() as i32;
    let n = exp.parse::<i32>().expect("exponent") + 1;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if k <= n && n <= 21 {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', (n - k) as usize));
    } else if 0 < n && n <= 21 {
        out.push_str(&digits[..n as usize]);
        out.push('.');
        out.push_str(&digits[n as usize..]);
    } else if -6 < n && n <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-n) as usize));
        out.push_str(&digits);
    } else {
        out.push_str(&digits[..1]);
        if k > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        let e = n - 1;
        out.push(if e >= 0 { '+' } else { '-' });
        out.push_str(&e.abs().to_string());
    }
    out
}

/// Exact decimal digits of `|x|` (x finite, non-zero) and the power of ten of
/// the first digit.
fn exact_digits(x: f64) -> (Vec<u8>, i32) {
    let s = format!("{:.1100e}", x.abs());
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let mut digits: Vec<u8> = mant.bytes().filter(|b| *b != b'.').map(|b| b - b'0').collect();
    while digits.len() > 1 && *digits.last().unwrap() == 0 {
        digits.pop();
    }
    (digits, exp.parse().expect("exponent"))
}

/// Rounds digit string to `n` digits, half away from zero. Returns the digits
/// and whether a carry added a leading digit.
fn round_digits(digits: &[u8], n: usize) -> (Vec<u8>, bool) {
    let mut out: Vec<u8> = digits.iter().copied().take(n).collect();
    out.resize(n, 0);
    if digits.len() > n && digits[n] >= 5 {
        let mut i = n;
        loop {
            if i == 0 {
                out.insert(0, 1);
                out.truncate(n.max(1));
                return (out, true);
            }
            i -= 1;
            if out[i] == 9 {
                out[i] = 0;
            } else {
                out[i] += 1;
                break;
            }
        }
    }
    (out, false)
}

fn digits_to_string(d: &[u8]) -> String {
    d.iter().map(|b| (b'0' + b) as char).collect()
}

/// `Number.prototype.toFixed`.
pub fn to_fixed(x: f64, frac: usize) -> String {
    if !x.is_finite() || x.abs() >= 1e21 {
        return format_number(x);
    }
    let neg = x < 0.0;
    let body = if x == 0.0 {
        let mut s = "0".to_string();
        if frac > 0 {
            s.push('.');
            s.extend(std::iter::repeat_n('0', frac));
        }
        s
    } else {
        let (digits, e) = exact_digits(x);
        // Number of digits kept: integer digits plus `frac`.
        let keep = e + 1 + frac as i32;
        let (mut rounded, int_len) = if keep <= 0 {
            // Everything is below the rounding position.
            let bump = keep == 0 && digits[0] >= 5;
            let mut v = vec![0u8; frac + 1];
            if bump {
                *v.last_mut().unwrap() = 1;
            }
            (v, 1usize)
        } else {
            let (r, carry) = round_digits(&digits, keep as usize);
            let mut r = r;
            let mut int_len = (e + 1) as isize;
            if carry {
                r.push(0);
                int_len += 1;
            }
            if int_len <= 0 {
                let mut padded = vec![0u8; (1 - int_len) as usize];
                padded.extend(r);
                (padded, 1)
            } else {
                (r, int_len as usize)
            }
        };
        rounded.resize(int_len + frac, 0);
        let mut s = digits_to_string(&rounded[..int_len]);
        if frac > 0 {
            s.push('.');
            s.push_str(&digits_to_string(&rounded[int_len..]));
        }
        s
    };
    let is_zero = body.bytes().all(|b| b == b'0' || b == b'.');
    if neg && !is_zero {
        format!("-{body}")
    } else {
        body
    }
}

/// `Number.prototype.toPrecision`.
pub fn to_precision(x: f64, p: usize) -> String {
    if !x.is_finite() {
        return format_number(x);
    }
    if x == 0.0 {
        return to_fixed(0.0, p - 1);
    }
    let neg = x < 0.0;
    let (digits, mut e) = exact_digits(x);
    let (d, carry) = round_digits(&digits, p);
    if carry {
        e += 1;
    }
    let ds = digits_to_string(&d);
    let body = if e < -6 || e >= p as i32 {
        let mut s = ds[..1].to_string();
        if p > 1 {
            s.push('.');
            s.push_str(&ds[1..]);
        }
        format!("{s}e{}{}", if e >= 0 { '+' } else { '-' }, e.abs())
    } else if e >= 0 {
        let int_len = (e + 1) as usize;
        if int_len >= p {
            ds
        } else {
            format!("{}.{}", &ds[..int_len], &ds[int_len..])
        }
    } else {
        format!("0.{}{}", "0".repeat((-e - 1) as usize), ds)
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// `Number.prototype.toExponential` with explicit fraction digits.
pub fn to_exponential(x: f64, frac: Option<usize>) -> String {
    if !x.is_finite() {
        return format_number(x);
    }
    let neg = x < 0.0;
    let (ds, e) = if x == 0.0 {
        ("0".repeat(frac.unwrap_or(0) + 1), 0)
    } else {
        match frac {
            Some(f) => {
                let (digits, mut e) = exact_digits(x);
                let (d, carry) = round_digits(&digits, f + 1);
                if carry {
                    e += 1;
                }
                (digits_to_string(&d), e)
            }
            None => {
                let sci = format!("{:e}", x.abs());
                let (mant, exp) = sci.split_once('e').expect("exponent form");
                (mant.replace('.', ""), exp.parse().expect("exponent"))
            }
        }
    };
    let mut s = ds[..1].to_string();
    if ds.len() > 1 {
        s.push('.');
        s.push_str(&ds[1..]);
    }
    let body = format!("{s}e{}{}", if e >= 0 { '+' } else { '-' }, e.abs());
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// `Number.prototype.toString(radix)` for radix other than 10.
pub fn format_radix(x: f64, radix: u32) -> String {
    if radix == 10 || !x.is_finite() || x == 0.0 {
        return format_number(x);
    }
    let neg = x < 0.0;
    let x = x.abs();
    let mut int = x.trunc();
    let mut frac = x - int;
    let mut int_digits = Vec::new();
    if int == 0.0 {
        int_digits.push('0');
    }
    while int >= 1.0 {
        let d = (int % radix as f64) as u32;
        int_digits.push(std::char::from_digit(d, radix).unwrap_or('0'));
        int = (int / radix as f64).trunc();
    }
    int_digits.reverse();
    let mut s: String = int_digits.into_iter().collect();
    if frac > 0.0 {
        s.push('.');
        let mut n = 0;
        while frac > 0.0 && n < 52 {
            frac *= radix as f64;
            let d = frac.trunc() as u32;
            s.push(std::char::from_digit(d, radix).unwrap_or('0'));
            frac -= d as f64;
            n += 1;
        }
    }
    if neg {
        format!("-{s}")
    } else {
        s
    }
}

pub fn is_js_whitespace(c: char) -> bool {
    matches!(
        c,
        '\u{9}' | '\u{a}' | '\u{b}' | '\u{c}' | '\u{d}' | ' ' | '\u{a0}' | '\u{1680}'
            | '\u{2000}'..='\u{200a}'
            | '\u{2028}' | '\u{2029}' | '\u{202f}' | '\u{205f}' | '\u{3000}' | '\u{feff}'
    )
}

/// ToNumber applied to a string.
pub fn string_to_number(s: &str) -> f64 {
    let t = s.trim_matches(is_js_whitespace);
    if t.is_empty() {
        return 0.0;
    }
    for (prefix, radix) in [("0x", 16), ("0X", 16), ("0o", 8), ("0O", 8), ("0b", 2), ("0B", 2)] {
        if let Some(rest) = t.strip_prefix(prefix) {
            if rest.is_empty() {
                return f64::NAN;
            }
            let mut v = 0.0f64;
            for c in rest.chars() {
                match c.to_digit(radix) {
                    Some(d) => v = v * radix as f64 + d as f64,
                    None => return f64::NAN,
                }
            }
            return v;
        }
    }
    match t {
        "Infinity" | "+Infinity" => return f64::INFINITY,
        "-Infinity" => return f64::NEG_INFINITY,
        _ => {}
    }
    if !t
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'))
    {
        return f64::NAN;
    }
    t.parse::<f64>().unwrap_or(f64::NAN)
}

/// Global `parseFloat`.
pub fn parse_float(s: &str) -> f64 {
    let t = s.trim_start_matches(is_js_whitespace);
    let b = t.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    if t[i..].starts_with("Infinity") {
        return if b.first() == Some(&b'-') {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut saw_digits = i > int_start;
    if i < b.len() && b[i] == b'.' {
        let f = i + 1;
        let mut j = f;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > f || saw_digits {
            saw_digits = saw_digits || j > f;
            i = j;
        }
    }
    if !saw_digits {
        return f64::NAN;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let ds = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > ds {
            i = j;
        }
    }
    t[..i].parse::<f64>().unwrap_or(f64::NAN)
}

/// Global `parseInt`.
pub fn parse_int(s: &str, radix: Option<f64>) -> f64 {
    let t = s.trim_start_matches(is_js_whitespace);
    let (neg, mut t) = match t.as_bytes().first() {
        Some(b'-') => (true, &t[1..]),
        Some(b'+') => (false, &t[1..]),
        _ => (false, t),
    };
    let mut r = radix.map(to_int32).unwrap_or(0);
    if r == 0 {
        r = 10;
        if t.starts_with("0x") || t.starts_with("0X") {
            r = 16;
            t = &t[2..];
        }
    } else if r == 16 && (t.starts_with("0x") || t.starts_with("0X")) {
        t = &t[2..];
    }
    if !(2..=36).contains(&r) {
        return f64::NAN;
    }
    let mut v = 0.0f64;
    let mut any = false;
    for c in t.chars() {
        match c.to_digit(r as u32) {
            Some(d) => {
                v = v * r as f64 + d as f64;
                any = true;
            }
            None => break,
        }
    }
    if !any {
        return f64::NAN;
    }
    if neg {
        -v
    } else {
        v
    }
}

pub fn to_int32(x: f64) -> i32 {
    to_uint32(x) as i32
}

pub fn to_uint32(x: f64) -> u32 {
    if !x.is_finite() {
        return 0;
    }
    let m = x.trunc().rem_euclid(4294967296.0);
    m as u32
}
