#ifndef STPP_VERSION_HPP
#define STPP_VERSION_HPP

namespace stpp {
inline constexpr const char* version = "0.1.0";
}

#endif  // STPP_VERSION_HPP
