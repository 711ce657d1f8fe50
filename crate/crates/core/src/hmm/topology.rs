use std::ops::Range;

/// Left-to-right topology: three emitting states per phone, five for silence,
/// one shared self-loop probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmTopology {
    states_per_phone: Vec<usize>,
    offsets: Vec<usize>,
    state_phone: Vec<usize>,
    self_loop: f64,
}

impl HmmTopology {
    pub fn new(num_phones: usize, sil_states: usize, phone_states: usize, self_loop: f64) -> Self {
        assert!(num_phones > 0 && sil_states > 0 && phone_states > 0);
        assert!(self_loop > 0.0 && self_loop < 1.0);
        let states_per_phone: Vec<usize> = (0..num_phones)
            .map(|p| if p == 0 { sil_states } else { phone_states })
            .collect();
        let mut offsets = Vec::with_capacity(num_phones);
        let mut state_phone = Vec::new();
        for (p, &n) in states_per_phone.iter().enumerate() {
            offsets.push(state_phone.len());
            state_phone.extend(std::iter::repeat_n(p, n));
        }
        Self {
            states_per_phone,
            offsets,
            state_phone,
            self_loop,
        }
    }

    /// 3-state phones, 5-state silence (phone 0), self-loop 0.5.
    pub fn standard(num_phones: usize) -> Self {
        Self::new(num_phones, 5, 3, 0.5)
    }

    pub fn num_states(&self) -> usize {
        self.state_phone.len()
    }

    pub fn num_phones(&self) -> usize {
        self.states_per_phone.len()
    }

    pub fn self_loop(&self) -> f64 {
        self.self_loop
    }

    pub fn log_self_loop(&self) -> f64 {
        self.self_loop.ln()
    }

    /// Log-probability of leaving a state (to the next state or the next phone).
    pub fn log_forward(&self) -> f64 {
        (1.0 - self.self_loop).ln()
    }

    pub fn phone_states(&self, phone: usize) -> Range<usize> {
        self.offsets[phone]..self.offsets[phone] + self.states_per_phone[phone]
    }

    pub fn phone_of(&self, state: usize) -> usize {
        self.state_phone[state]
    }

    pub fn is_entry(&self, state: usize) -> bool {
        self.offsets[self.state_phone[state]] == state
    }

    pub fn is_exit(&self, state: usize) -> bool {
        self.phone_states(self.state_phone[state]).end == state + 1
    }

    /// State sequence of the transcript's composite HMM.
    pub fn composite(&self, transcript: &[usize]) -> Vec<usize> {
        transcript.iter().flat_map(|&p| self.phone_states(p)).collect()
    }

    /// Phone sequence of a state path with consecutive repeats of the same
    /// phone instance merged.
    pub fn phones_of_path(&self, path: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        for (t, &s) in path.iter().enumerate() {
            let new_phone = t == 0 || (self.is_entry(s) && path[t - 1] != s) || self.phone_of(path[t - 1]) != self.phone_of(s);
            if new_phone {
                out.push(self.phone_of(s));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_inventory_has_38_states() {
        let t = HmmTopology::standard(12);
        assert_eq!(t.num_states(), 38);
        assert_eq!(t.phone_states(0), 0..5);
        assert_eq!(t.phone_states(1), 5..8);
        assert_eq!(t.phone_of(37), 11);
        assert!(t.is_entry(5) && t.is_exit(7) && !t.is_entry(6));
        assert!((t.self_loop() + t.log_forward().exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composite_and_back() {
        let t = HmmTopology::standard(12);
        let c = t.composite(&[0, 3, 3, 0]);
        assert_eq!(c.len(), 16);
        let path: Vec<usize> = c.iter().flat_map(|&s| [s, s]).collect();
        assert_eq!(t.phones_of_path(&path), vec![0, 3, 3, 0]);
    }
}
