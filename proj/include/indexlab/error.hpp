#ifndef INDEXLAB_ERROR_HPP
#define INDEXLAB_ERROR_HPP

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace indexlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid numeric parameter (lambda <= 0, q < 1, ...).
class ParameterError : public Error { public: using Error::Error; };
/// Operand dimensions do not fit together.
class DimensionError : public Error { public: using Error::Error; };
/// A spectral function is undefined on part of the spectrum.
class DomainError : public Error { public: using Error::Error; };
/// Malformed model or experiment configuration.
class ConfigError : public Error { public: using Error::Error; };
/// A size or term-count cap was exceeded.
class ResourceError : public Error { public: using Error::Error; };
/// A numerical procedure did not reach its requested accuracy.
class AccuracyError : public Error { public: using Error::Error; };
/// Resolvent invertibility guard violated.
class GuardError : public Error { public: using Error::Error; };
/// Spectral flow path has an eigenvalue pinned at zero at an endpoint.
class DegenerateEndpointError : public Error { public: using Error::Error; };

class EigensolverError : public Error {
public:
  EigensolverError(std::size_t dim, double condition)
      : Error("eigensolver did not converge (dim=" + std::to_string(dim) +
              ", condition estimate=" + std::to_string(condition) + ")"),
        dim_(dim), condition_(condition) {}
  std::size_t dim() const noexcept { return dim_; }
  double condition_estimate() const noexcept { return condition_; }

private:
  std::size_t dim_;
  double condition_;
};

namespace detail {

struct WarningSink {
  std::mutex mutex;
  std::function<void(std::string_view)> handler = [](std::string_view msg) {
    std::clog << "indexlab warning: " << msg << '\n';
  };
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

} // namespace detail

/// Replace the warning handler; returns the previous one.
inline std::function<void(std::string_view)>
set_warning_handler(std::function<void(std::string_view)> handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  std::swap(sink.handler, handler);
  return handler;
}

inline void warn(std::string_view message) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(message);
}

} // namespace indexlab

#endif // INDEXLAB_ERROR_HPP
