#pragma once

namespace adabn {

inline constexpr const char* kArtifactName = "adabn";
inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace adabn
