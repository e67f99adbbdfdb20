#ifndef CPSYS_VERSION_HPP_
#define CPSYS_VERSION_HPP_

#include <string_view>

namespace cps {

inline constexpr std::string_view kName = "cpsys";
inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace cps

#endif  // CPSYS_VERSION_HPP_
