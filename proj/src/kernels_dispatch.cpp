#include "stresskit/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "stresskit/errors.hpp"

namespace stresskit::kernels {

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

bool avx2_available() {
#if defined(__x86_64__) || defined(_M_X64)
    return cpu_supports_avx2() && avx2_ops_f64() != nullptr;
#else
    return false;
#endif
}

Backend initial_backend() {
    if (const char* env = std::getenv("STRESSKIT_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!avx2_available())
                throw ConfigError("STRESSKIT_KERNELS=avx2 but this CPU/build lacks AVX2+FMA");
            return Backend::avx2;
        }
        throw ConfigError(std::string("unknown STRESSKIT_KERNELS value: ") + env);
    }
    return avx2_available() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> slot{initial_backend()};
    return slot;
}

}  // namespace

Backend detect_backend() { return initial_backend(); }

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_available())
        throw ConfigError("AVX2 kernel backend unavailable on this CPU/build");
    backend_slot().store(b, std::memory_order_relaxed);
}

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

template <>
const Ops<double>& ops<double>() {
#if defined(__x86_64__) || defined(_M_X64)
    if (active_backend() == Backend::avx2) return *avx2_ops_f64();
#endif
    return scalar_ops_f64();
}

template <>
const Ops<float>& ops<float>() {
#if defined(__x86_64__) || defined(_M_X64)
    if (active_backend() == Backend::avx2) return *avx2_ops_f32();
#endif
    return scalar_ops_f32();
}

}  // namespace stresskit::kernels
