use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator streams derived from one run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Init = 1,
    Shuffle = 2,
    Means = 3,
    Samples = 4,
    Split = 5,
    GradCheck = 6,
}

pub(crate) fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
