#pragma once

namespace xnet {

/// Caps OpenMP worker threads from the XNET_THREADS environment variable.
/// Returns the thread count in effect; invalid values raise ConfigError.
int configure_threads();

int max_threads();
void set_threads(int n);

}  // namespace xnet
