#pragma once

#include <iostream>
#include <mutex>
#include <ostream>
#include <string>

namespace tnt {

namespace detail {
struct DiagState {
  std::mutex mutex;
  std::ostream* sink = &std::clog;
};

inline DiagState& diag_state() {
  static DiagState state;
  return state;
}
}  // namespace detail

/// Redirects warnings, summaries and progress lines. Passing nullptr silences them.
inline void set_diagnostic_stream(std::ostream* sink) {
  auto& st = detail::diag_state();
  std::lock_guard lock(st.mutex);
  st.sink = sink;
}

inline void diag(const std::string& line) {
  auto& st = detail::diag_state();
  std::lock_guard lock(st.mutex);
  if (st.sink) *st.sink << line << '\n';
}

inline void warn(const std::string& line) { diag("warning: " + line); }

/// Scoped redirection, mostly for tests.
class DiagnosticCapture {
 public:
  explicit DiagnosticCapture(std::ostream* sink) {
    auto& st = detail::diag_state();
    std::lock_guard lock(st.mutex);
    previous_ = st.sink;
    st.sink = sink;
  }
  ~DiagnosticCapture() { set_diagnostic_stream(previous_); }
  DiagnosticCapture(const DiagnosticCapture&) = delete;
  DiagnosticCapture& operator=(const DiagnosticCapture&) = delete;

 private:
  std::ostream* previous_;
};

}  // namespace tnt
