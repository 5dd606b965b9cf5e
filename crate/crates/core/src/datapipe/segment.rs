use std::ops::Range;

/// Runs where `p - threshold > 0`, delimited by its sign changes; runs
/// shorter than `min_len` are dropped.
pub fn segment_contacts(p: &[f64], threshold: f64, min_len: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &v) in p.iter().enumerate() {
        match (v - threshold > 0.0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push(s..i);
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if p.len() - s >= min_len {
            out.push(s..p.len());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_threshold_is_empty() {
        assert!(segment_contacts(&[0.1; 50], 0.2, 10).is_empty());
    }

    #[test]
    fn square_pulse_support() {
        let mut p = vec![0.0; 100];
        p[20..60].iter_mut().for_each(|v| *v = 1.0);
        p[80..85].iter_mut().for_each(|v| *v = 1.0);
        p[95..].iter_mut().for_each(|v| *v = 1.0);
        assert_eq!(segment_contacts(&p, 0.5, 10), vec![20..60]);
        assert_eq!(segment_contacts(&p, 0.5, 5), vec![20..60, 80..85, 95..100]);
    }
}
