//! Native units compiled as dynamic libraries (`.so`, `.dylib`, `.dll`).
//!
//! The boundary is a small C ABI; envelopes, contexts and directives cross
//! it as JSON so the host and the unit need not share a compiler version.
//!
//! ```c
//! uint32_t scpa_abi_version(void);
//! void*    scpa_unit_create(void);
//! void     scpa_unit_destroy(void* unit);
//! int32_t  scpa_unit_call(void* unit, uint32_t op,
//!                         const uint8_t* handler, size_t handler_len,
//!                         const uint8_t* input, size_t input_len,
//!                         RawBuffer* out);
//! void     scpa_buffer_free(RawBuffer buf);
//! ```
//!
//! Unit crates implement [`PipelineUnit`] and invoke
//! [`export_unit!`](crate::export_unit) once.

use std::ffi::c_void;
use std::path::Path;
use std::sync::Arc;

use libloading::Library;

use crate::contract::{ChainDirective, Envelope, HostContext, LoadReport, PipelineUnit, UnitError};

/// Bumped whenever the exported symbol set or encoding changes.
pub const ABI_VERSION: u32 = 1;

pub const OP_LOAD: u32 = 0;
pub const OP_EXECUTE: u32 = 1;
pub const OP_NEXT: u32 = 2;
pub const OP_UNLOAD: u32 = 3;

pub const STATUS_OK: i32 = 0;
pub const STATUS_UNIT_ERROR: i32 = 1;
pub const STATUS_PANIC: i32 = 2;
pub const STATUS_PROTOCOL: i32 = 3;

/// Byte buffer allocated by the unit library and released with
/// `scpa_buffer_free` from the same library.
#[repr(C)]
pub struct RawBuffer {
    pub ptr: *mut u8,
    pub len: usize,
    pub cap: usize,
}

impl RawBuffer {
    pub const fn empty() -> Self {
        Self {
            ptr: std::ptr::null_mut(),
            len: 0,
            cap: 0,
        }
    }

    fn from_vec(v: Vec<u8>) -> Self {
        let mut v = std::mem::ManuallyDrop::new(v);
        Self {
            ptr: v.as_mut_ptr(),
            len: v.len(),
            cap: v.capacity(),
        }
    }
}

type AbiVersionFn = unsafe extern "C" fn() -> u32;
type CreateFn = unsafe extern "C" fn() -> *mut c_void;
type DestroyFn = unsafe extern "C" fn(*mut c_void);
type CallFn = unsafe extern "C" fn(
    *mut c_void,
    u32,
    *const u8,
    usize,
    *const u8,
    usize,
    *mut RawBuffer,
) -> i32;
type FreeFn = unsafe extern "C" fn(RawBuffer);

/// A unit living in a loaded dynamic library.
pub struct NativeUnit {
    handle: *mut c_void,
    call_fn: CallFn,
    free_fn: FreeFn,
    destroy_fn: DestroyFn,
    // Dropped after `handle` is destroyed.
    _library: Arc<Library>,
}

// The exported object is a `Box<dyn PipelineUnit>`, which is Send + Sync.
unsafe impl Send for NativeUnit {}
unsafe impl Sync for NativeUnit {}

impl std::fmt::Debug for NativeUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NativeUnit")
            .field("handle", &self.handle)
            .finish()
    }
}

impl NativeUnit {
    /// Loads the library at `path` and instantiates its unit.
    pub fn open(path: &Path) -> Result<Self, String> {
        // SAFETY: loading runs the library's initializers; bundles are
        // checksum-verified before they reach this point.
        let library = unsafe { Library::new(path) }
            .map_err(|e| format!("cannot load {}: {e}", path.display()))?;
        unsafe {
            let abi: AbiVersionFn = *library
                .get::<AbiVersionFn>(b"scpa_abi_version\0")
                .map_err(|e| format!("missing scpa_abi_version: {e}"))?;
            let found = abi();
            if found != ABI_VERSION {
                return Err(format!("unit ABI {found}, host expects {ABI_VERSION}"));
            }
            let create: CreateFn = *library
                .get::<CreateFn>(b"scpa_unit_create\0")
                .map_err(|e| format!("missing scpa_unit_create: {e}"))?;
            let destroy_fn: DestroyFn = *library
                .get::<DestroyFn>(b"scpa_unit_destroy\0")
                .map_err(|e| format!("missing scpa_unit_destroy: {e}"))?;
            let call_fn: CallFn = *library
                .get::<CallFn>(b"scpa_unit_call\0")
                .map_err(|e| format!("missing scpa_unit_call: {e}"))?;
            let free_fn: FreeFn = *library
                .get::<FreeFn>(b"scpa_buffer_free\0")
                .map_err(|e| format!("missing scpa_buffer_free: {e}"))?;
            let handle = create();
            if handle.is_null() {
                return Err("scpa_unit_create returned null".into());
            }
            Ok(Self {
                handle,
                call_fn,
                free_fn,
                destroy_fn,
                _library: Arc::new(library),
            })
        }
    }

    fn call(&self, op: u32, handler: &str, input: &[u8]) -> Result<Vec<u8>, UnitError> {
        let mut out = RawBuffer::empty();
        let status = unsafe {
            (self.call_fn)(
                self.handle,
                op,
                handler.as_ptr(),
                handler.len(),
                input.as_ptr(),
                input.len(),
                &mut out,
            )
        };
        let bytes = if out.ptr.is_null() {
            Vec::new()
        } else {
            // SAFETY: the library filled `out` with a buffer of `len` bytes.
            let copy = unsafe { std::slice::from_raw_parts(out.ptr, out.len) }.to_vec();
            unsafe { (self.free_fn)(out) };
            copy
        };
        match status {
            STATUS_OK => Ok(bytes),
            STATUS_UNIT_ERROR => Err(UnitError::new(String::from_utf8_lossy(&bytes))),
            STATUS_PANIC => Err(UnitError::new(format!(
                "unit panicked: {}",
                String::from_utf8_lossy(&bytes)
            ))),
            other => Err(UnitError::new(format!(
                "unit protocol error ({other}): {}",
                String::from_utf8_lossy(&bytes)
            ))),
        }
    }
}

impl Drop for NativeUnit {
    fn drop(&mut self) {
        unsafe { (self.destroy_fn)(self.handle) };
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("contract types serialize")
}

fn from_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, UnitError> {
    serde_json::from_slice(bytes).map_err(|e| UnitError::new(format!("bad unit reply: {e}")))
}

impl PipelineUnit for NativeUnit {
    fn load(&self, ctx: &HostContext) -> Result<LoadReport, UnitError> {
        from_json(&self.call(OP_LOAD, "", &to_json(ctx))?)
    }

    fn execute(&self, handler: &str, env: Envelope) -> Result<Envelope, UnitError> {
        from_json(&self.call(OP_EXECUTE, handler, &to_json(&env))?)
    }

    fn next(&self, handler: &str, env: &Envelope) -> ChainDirective {
        match self
            .call(OP_NEXT, handler, &to_json(env))
            .and_then(|b| from_json(&b))
        {
            Ok(d) => d,
            Err(e) => {
                log::warn!("next() failed for handler {handler}: {e}; stopping chain");
                ChainDirective::Stop
            }
        }
    }

    fn unload(&self) {
        if let Err(e) = self.call(OP_UNLOAD, "", b"") {
            log::warn!("unit unload failed: {e}");
        }
    }
}

/// Library-side glue used by [`export_unit!`](crate::export_unit).
#[doc(hidden)]
pub mod export {
    use super::*;
    use std::panic::{catch_unwind, AssertUnwindSafe};

    type Boxed = Box<dyn PipelineUnit>;

    pub fn create<T: PipelineUnit + 'static>(ctor: impl FnOnce() -> T) -> *mut c_void {
        match catch_unwind(AssertUnwindSafe(ctor)) {
            Ok(unit) => Box::into_raw(Box::new(Box::new(unit) as Boxed)) as *mut c_void,
            Err(_) => std::ptr::null_mut(),
        }
    }

    /// # Safety
    /// `unit` must come from [`create`] and not be used afterwards.
    pub unsafe fn destroy(unit: *mut c_void) {
        if !unit.is_null() {
            drop(Box::from_raw(unit as *mut Boxed));
        }
    }

    /// # Safety
    /// `buf` must have been produced by [`call`] in this library.
    pub unsafe fn free(buf: RawBuffer) {
        if !buf.ptr.is_null() {
            drop(Vec::from_raw_parts(buf.ptr, buf.len, buf.cap));
        }
    }

    fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
        payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into())
    }

    /// # Safety
    /// Pointers must be valid for the given lengths; `unit` must come from
    /// [`create`]; `out` must point to writable memory.
    pub unsafe fn call(
        unit: *mut c_void,
        op: u32,
        handler_ptr: *const u8,
        handler_len: usize,
        input_ptr: *const u8,
        input_len: usize,
        out: *mut RawBuffer,
    ) -> i32 {
        let unit: &Boxed = &*(unit as *const Boxed);
        let handler = std::slice::from_raw_parts(handler_ptr, handler_len);
        let input = std::slice::from_raw_parts(input_ptr, input_len);
        let result = catch_unwind(AssertUnwindSafe(|| {
            dispatch(unit.as_ref(), op, handler, input)
        }));
        let (status, bytes) = match result {
            Ok(Ok(bytes)) => (STATUS_OK, bytes),
            Ok(Err((status, msg))) => (status, msg.into_bytes()),
            Err(p) => (STATUS_PANIC, panic_message(p.as_ref()).into_bytes()),
        };
        *out = RawBuffer::from_vec(bytes);
        status
    }

    fn dispatch(
        unit: &dyn PipelineUnit,
        op: u32,
        handler: &[u8],
        input: &[u8],
    ) -> Result<Vec<u8>, (i32, String)> {
        let protocol = |e: String| (STATUS_PROTOCOL, e);
        let handler = std::str::from_utf8(handler).map_err(|e| protocol(e.to_string()))?;
        match op {
            OP_LOAD => {
                let ctx: HostContext =
                    serde_json::from_slice(input).map_err(|e| protocol(e.to_string()))?;
                let report = unit
                    .load(&ctx)
                    .map_err(|e| (STATUS_UNIT_ERROR, e.message))?;
                Ok(to_json(&report))
            }
            OP_EXECUTE => {
                let env: Envelope =
                    serde_json::from_slice(input).map_err(|e| protocol(e.to_string()))?;
                let out = unit
                    .execute(handler, env)
                    .map_err(|e| (STATUS_UNIT_ERROR, e.message))?;
                Ok(to_json(&out))
            }
            OP_NEXT => {
                let env: Envelope =
                    serde_json::from_slice(input).map_err(|e| protocol(e.to_string()))?;
                Ok(to_json(&unit.next(handler, &env)))
            }
            OP_UNLOAD => {
                unit.unload();
                Ok(Vec::new())
            }
            other => Err(protocol(format!("unknown op {other}"))),
        }
    }
}

/// Exports a [`PipelineUnit`] from a `cdylib` crate.
///
/// ```ignore
/// struct MyUnit;
/// impl scpa_host::contract::PipelineUnit for MyUnit { /* ... */ }
/// scpa_host::export_unit!(MyUnit);
/// ```
#[macro_export]
macro_rules! export_unit {
    ($ctor:expr) => {
        #[no_mangle]
        pub extern "C" fn scpa_abi_version() -> u32 {
            $crate::loader::native::ABI_VERSION
        }

        #[no_mangle]
        pub extern "C" fn scpa_unit_create() -> *mut ::std::ffi::c_void {
            $crate::loader::native::export::create(|| $ctor)
        }

        /// # Safety
        /// Called by the host with a pointer from `scpa_unit_create`.
        #[no_mangle]
        pub unsafe extern "C" fn scpa_unit_destroy(unit: *mut ::std::ffi::c_void) {
            $crate::loader::native::export::destroy(unit)
        }

        /// # Safety
        /// Called by the host with valid buffers.
        #[no_mangle]
        pub unsafe extern "C" fn scpa_unit_call(
            unit: *mut ::std::ffi::c_void,
            op: u32,
            handler_ptr: *const u8,
            handler_len: usize,
            input_ptr: *const u8,
            input_len: usize,
            out: *mut $crate::loader::native::RawBuffer,
        ) -> i32 {
            $crate::loader::native::export::call(
                unit,
                op,
                handler_ptr,
                handler_len,
                input_ptr,
                input_len,
                out,
            )
        }

        /// # Safety
        /// `buf` must come from `scpa_unit_call`.
        #[no_mangle]
        pub unsafe extern "C" fn scpa_buffer_free(buf: $crate::loader::native::RawBuffer) {
            $crate::loader::native::export::free(buf)
        }
    };
}
