/// Splits `len` into `parts` contiguous spans. The first `parts - 1` spans
/// have length `len / parts`; the last one absorbs the remainder.
///
/// Returns `parts + 1` boundaries, starting at 0 and ending at `len`.
pub fn partition_axis(len: usize, parts: usize) -> Vec<usize> {
    assert!(parts > 0);
    let step = len / parts;
    let mut bounds: Vec<usize> = (0..parts).map(|i| i * step).collect();
    bounds.push(len);
    bounds
}
