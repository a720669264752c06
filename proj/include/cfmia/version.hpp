#pragma once

namespace cfmia {

inline constexpr const char* kArtifactVersion = "0.1.0";
// Attack feature layout identifier, recorded in reports so downstream readers
// can detect incompatible record files.
inline constexpr const char* kAttackFeatureLayout = "posterior_desc+heom+l2+sparsity+missing_flag+cf_posterior_desc";

}  // namespace cfmia
