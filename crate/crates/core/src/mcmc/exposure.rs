use crate::data_model::{Cohort, Transition};
use crate::hazards::{TailPolicy, TimePartition};

/// Per-interval exposure of one subject at one course, with the interval
/// holding its observed event (if any) split by cause.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectExposure {
    pub exposure: Vec<f64>,
    pub death_interval: Option<usize>,
    pub next_interval: Option<usize>,
}

/// Exposures over `partition` for every subject reaching course `k`, in
/// cohort order. Under `Truncate`, time and events past the last knot are
/// dropped.
pub fn risk_set_exposures(
    cohort: &Cohort,
    k: usize,
    partition: &TimePartition,
    tail: TailPolicy,
) -> Vec<SubjectExposure> {
    cohort
        .reaching(k)
        .map(|s| {
            let c = &s.courses[k - 1];
            subject_exposure(c.waiting_time, c.transition, partition, tail)
        })
        .collect()
}

pub(crate) fn subject_exposure(
    w: f64,
    transition: Transition,
    partition: &TimePartition,
    tail: TailPolicy,
) -> SubjectExposure {
    let mut exposure = Vec::with_capacity(partition.intervals());
    partition.exposures(w, tail, &mut exposure);
    let observable = tail == TailPolicy::Extend || w <= partition.last_knot();
    let interval = observable.then(|| partition.interval_of(w));
    SubjectExposure {
        exposure,
        death_interval: interval.filter(|_| transition == Transition::Death),
        next_interval: interval.filter(|_| transition == Transition::NextCourse),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_arithmetic() {
        let p = TimePartition::new(vec![0.0, 1.0, 2.0]).unwrap();
        let e = subject_exposure(1.5, Transition::Death, &p, TailPolicy::Extend);
        assert_eq!(e.exposure, vec![1.0, 0.5]);
        assert_eq!((e.death_interval, e.next_interval), (Some(1), None));

        let e = subject_exposure(0.4, Transition::Censored, &p, TailPolicy::Extend);
        assert_eq!(e.exposure, vec![0.4, 0.0]);
        assert_eq!((e.death_interval, e.next_interval), (None, None));

        let e = subject_exposure(1.5, Transition::NextCourse, &p, TailPolicy::Extend);
        assert_eq!(e.exposure, vec![1.0, 0.5]);
        assert_eq!((e.death_interval, e.next_interval), (None, Some(1)));
    }

    #[test]
    fn truncation_drops_late_time() {
        let p = TimePartition::new(vec![0.0, 1.0, 2.0]).unwrap();
        let e = subject_exposure(2.5, Transition::Death, &p, TailPolicy::Truncate);
        assert_eq!(e.exposure, vec![1.0, 1.0]);
        assert_eq!(e.death_interval, None);
        let e = subject_exposure(2.5, Transition::Death, &p, TailPolicy::Extend);
        assert_eq!(e.exposure, vec![1.0, 1.5]);
        assert_eq!(e.death_interval, Some(1));
    }
}
