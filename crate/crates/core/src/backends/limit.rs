use parking_lot::{Condvar, Mutex};

use super::lm::{LanguageModel, LmRequest, LmResponse};
use super::search::{SearchBackend, SearchRequest, SearchResult};
use crate::error::Result;

#[derive(Debug, Default)]
struct Tickets {
    issued: u64,
    admitted: u64,
    active: usize,
}

/// FIFO counting semaphore: callers are admitted in arrival order.
#[derive(Debug)]
pub struct FairLimiter {
    max: usize,
    state: Mutex<Tickets>,
    cv: Condvar,
}

impl FairLimiter {
    pub fn new(max: usize) -> Self {
        FairLimiter {
            max: max.max(1),
            state: Mutex::new(Tickets::default()),
            cv: Condvar::new(),
        }
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut s = self.state.lock();
            let ticket = s.issued;
            s.issued += 1;
            while !(s.admitted == ticket && s.active < self.max) {
                self.cv.wait(&mut s);
            }
            s.admitted += 1;
            s.active += 1;
            self.cv.notify_all();
        }
        struct Release<'a>(&'a FairLimiter);
        impl Drop for Release<'_> {
            fn drop(&mut self) {
                self.0.state.lock().active -= 1;
                self.0.cv.notify_all();
            }
        }
        let _release = Release(self);
        f()
    }
}

/// Wraps a client so at most `max` calls are in flight at once.
pub struct Limited<C> {
    inner: C,
    limiter: FairLimiter,
}

impl<C> Limited<C> {
    pub fn new(inner: C, max: usize) -> Self {
        Limited {
            inner,
            limiter: FairLimiter::new(max),
        }
    }
}

impl<C: LanguageModel> LanguageModel for Limited<C> {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        self.limiter.run(|| self.inner.complete(request))
    }
}

impl<C: SearchBackend> SearchBackend for Limited<C> {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>> {
        self.limiter.run(|| self.inner.search(request))
    }
}
