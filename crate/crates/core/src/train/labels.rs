use crate::metrics::STEP_SECONDS;

/// A labeled time span in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub label: usize,
    pub start: f64,
    pub stop: f64,
}

/// Label each output step by the span covering its center time
/// `(t + 0.5) * 80 ms`. Spans are closed on both ends; when two cover the
/// same center the one starting earlier wins. Uncovered steps get 0.
pub fn labels_from_spans(spans: &[Span], steps: usize) -> Vec<usize> {
    (0..steps)
        .map(|t| {
            let c = (t as f64 + 0.5) * STEP_SECONDS;
            spans
                .iter()
                .filter(|s| s.start <= c && c <= s.stop)
                .min_by(|a, b| a.start.total_cmp(&b.start))
                .map_or(0, |s| s.label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_rule() {
        // centers: 0.04, 0.12, 0.20, 0.28, 0.36
        let spans = [Span { label: 2, start: 0.1, stop: 0.3 }];
        assert_eq!(labels_from_spans(&spans, 5), vec![0, 2, 2, 2, 0]);
    }

    #[test]
    fn boundary_tie_goes_to_earlier_start() {
        let spans = [
            Span { label: 3, start: 0.2, stop: 0.5 },
            Span { label: 1, start: 0.0, stop: 0.2 },
        ];
        // center 0.20 lies on both spans
        assert_eq!(labels_from_spans(&spans, 3), vec![1, 1, 1]);
    }
}
