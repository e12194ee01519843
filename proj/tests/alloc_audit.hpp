#pragma once

#include <cstddef>

// Tracks the largest single heap request made while enabled. The test
// binary is linked with --wrap around malloc/calloc/realloc and replaces
// the global allocation functions, so requests from the library, Eigen and
// the standard containers are all observed.
namespace alloc_audit {

void reset();
void set_enabled(bool on);
std::size_t max_request();

}  // namespace alloc_audit
