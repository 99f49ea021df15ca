use crate::data::SearchRecord;

/// Impression indices of one search split into the booking and the
/// not-booked impressions kept for pairing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    pub booked: usize,
    /// Not-booked impressions in position order, truncated to
    /// `num_samples - 1`.
    pub not_booked: Vec<usize>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.not_booked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.not_booked.is_empty()
    }

    /// Row order: booked first, then not-booked.
    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.booked).chain(self.not_booked.iter().copied())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSkip {
    NoBooking,
    MultipleBookings,
    NoNegatives,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SkipCounts {
    pub no_booking: usize,
    pub multiple_bookings: usize,
    pub no_negatives: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.no_booking + self.multiple_bookings + self.no_negatives
    }
}

/// Pairs the booked impression with every not-booked one, keeping the
/// top-position not-booked impressions when there are more than
/// `num_samples - 1`.
pub fn build_pairs(record: &SearchRecord, num_samples: usize) -> Result<PairSet, PairSkip> {
    let mut booked = None;
    for (i, imp) in record.impressions.iter().enumerate() {
        if imp.booked {
            if booked.is_some() {
                return Err(PairSkip::MultipleBookings);
            }
            booked = Some(i);
        }
    }
    let booked = booked.ok_or(PairSkip::NoBooking)?;
    let mut not_booked: Vec<usize> = (0..record.impressions.len()).filter(|&i| i != booked).collect();
    not_booked.sort_by_key(|&i| record.impressions[i].position);
    not_booked.truncate(num_samples.saturating_sub(1));
    if not_booked.is_empty() {
        return Err(PairSkip::NoNegatives);
    }
    Ok(PairSet { booked, not_booked })
}

/// Pairs for every usable record; unusable records are skipped and counted.
pub fn build_all_pairs(records: &[SearchRecord], num_samples: usize) -> (Vec<(usize, PairSet)>, SkipCounts) {
    let mut counts = SkipCounts::default();
    let mut out = Vec::with_capacity(records.len());
    for (idx, r) in records.iter().enumerate() {
        match build_pairs(r, num_samples) {
            Ok(p) => out.push((idx, p)),
            Err(PairSkip::NoBooking) => counts.no_booking += 1,
            Err(PairSkip::MultipleBookings) => counts.multiple_bookings += 1,
            Err(PairSkip::NoNegatives) => counts.no_negatives += 1,
        }
    }
    if counts.total() > 0 {
        log::warn!(
            "skipped {} records while building pairs ({} without booking, {} with several, {} without negatives)",
            counts.total(),
            counts.no_booking,
            counts.multiple_bookings,
            counts.no_negatives
        );
    }
    (out, counts)
}
