#pragma once
// Command-line front end. dispatch() never throws: validation problems exit 1,
// runtime failures exit 2.

#include <iosfwd>

namespace bpr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

int dispatch(int argc, const char* const* argv);

}  // namespace bpr::cli
