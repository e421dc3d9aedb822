use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

type PlanKey = (TypeId, usize, bool);
type PlanCache = Mutex<HashMap<PlanKey, Box<dyn Any + Send + Sync>>>;

fn cache() -> &'static PlanCache {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached FFT plan; plans are immutable and shared between threads.
pub(crate) fn plan<T: Real>(n: usize, forward: bool) -> Arc<dyn Fft<T>> {
    let key = (TypeId::of::<T>(), n, forward);
    let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(p) = map.get(&key).and_then(|b| b.downcast_ref::<Arc<dyn Fft<T>>>()) {
        return p.clone();
    }
    let mut planner = FftPlanner::<T>::new();
    let p = if forward { planner.plan_fft_forward(n) } else { planner.plan_fft_inverse(n) };
    map.insert(key, Box::new(p.clone()));
    p
}

/// In-place unnormalised n-dimensional transform of one row-major block.
pub(crate) fn transform<T: Real>(data: &mut [Complex<T>], sizes: &[usize], forward: bool) {
    let total: usize = sizes.iter().product();
    debug_assert_eq!(data.len(), total);
    if sizes.len() == 1 {
        plan::<T>(total, forward).process(data);
        return;
    }
    let mut buf = Vec::new();
    for (axis, &n) in sizes.iter().enumerate() {
        let stride: usize = sizes[axis + 1..].iter().product();
        let outer = total / (n * stride);
        let fft = plan::<T>(n, forward);
        buf.resize(n, Complex::new(T::zero(), T::zero()));
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for i in 0..n {
                    buf[i] = data[base + i * stride];
                }
                fft.process(&mut buf);
                for i in 0..n {
                    data[base + i * stride] = buf[i];
                }
            }
        }
    }
}
