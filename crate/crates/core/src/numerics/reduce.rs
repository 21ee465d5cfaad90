/// Sums equally sized buffers pairwise in a fixed tree order. The result
/// depends only on the order of `parts`, never on how they were produced.
pub fn tree_sum(mut parts: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    if parts.is_empty() {
        return None;
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

pub fn tree_sum_scalars(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => tree_sum_scalars(&values[..n / 2]) + tree_sum_scalars(&values[n / 2..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_in_fixed_order() {
        let parts = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        assert_eq!(tree_sum(parts).unwrap(), vec![9.0, 12.0]);
        assert!(tree_sum(Vec::new()).is_none());
        assert_eq!(tree_sum_scalars(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
        assert_eq!(tree_sum_scalars(&[]), 0.0);
    }
}
