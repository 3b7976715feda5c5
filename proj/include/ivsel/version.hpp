#ifndef IVSEL_VERSION_HPP
#define IVSEL_VERSION_HPP

namespace ivsel {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

}  // namespace ivsel

#endif
