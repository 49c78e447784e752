use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<A> {
    pub obs: Vec<f64>,
    pub action: A,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<A> {
    capacity: usize,
    items: Vec<Transition<A>>,
    next: usize,
}

impl<A> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<A>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition<A> {
        &self.items[i]
    }
}

/// Row-major obs / next-obs matrices plus rewards and done flags for a batch.
pub(crate) struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl<A> ReplayBuffer<A> {
    pub(crate) fn gather(&self, indices: &[usize]) -> Batch {
        let mut b = Batch {
            size: indices.len(),
            obs: Vec::new(),
            next_obs: Vec::new(),
            rewards: Vec::with_capacity(indices.len()),
            dones: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            let t = &self.items[i];
            b.obs.extend_from_slice(&t.obs);
            b.next_obs.extend_from_slice(&t.next_obs);
            b.rewards.push(t.reward);
            b.dones.push(t.done);
        }
        b
    }
}
