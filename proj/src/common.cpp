#include "lumirec/common.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lumirec {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedRecord: return "MalformedRecord";
    case ErrorKind::kUnknownRoom: return "UnknownRoom";
    case ErrorKind::kEmptyWindow: return "EmptyWindow";
    case ErrorKind::kDegenerateProfile: return "DegenerateProfile";
    case ErrorKind::kTooFewPoints: return "TooFewPoints";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kKTooLarge: return "KTooLarge";
    case ErrorKind::kUntrainedModel: return "UntrainedModel";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kEmptyMatrix: return "EmptyMatrix";
    case ErrorKind::kInsufficientHouseholds: return "InsufficientHouseholds";
    case ErrorKind::kInvalidSpec: return "InvalidSpec";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kMissingArtifact: return "MissingArtifact";
    case ErrorKind::kConfigMismatch: return "ConfigMismatch";
    case ErrorKind::kInternal: return "Internal";
  }
  return "Unknown";
}

std::string_view to_string(Room room) {
  return room == Room::kRoom1 ? "room1" : "room2";
}

bool parse_room(std::string_view text, Room& out) {
  if (text == "room1") {
    out = Room::kRoom1;
    return true;
  }
  if (text == "room2") {
    out = Room::kRoom2;
    return true;
  }
  return false;
}

std::string_view to_string(Period period) {
  switch (period) {
    case Period::kNight: return "Night";
    case Period::kMorning: return "Morning";
    case Period::kAfternoon: return "Afternoon";
    case Period::kEvening: return "Evening";
  }
  return "Night";
}

bool parse_period(std::string_view text, Period& out) {
  for (auto p : {Period::kNight, Period::kMorning, Period::kAfternoon, Period::kEvening}) {
    if (text == to_string(p)) {
      out = p;
      return true;
    }
  }
  return false;
}

Date make_date(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) {
    throw Error(ErrorKind::kInvalidArgument, "invalid calendar date");
  }
  return sys_days{ymd};
}

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  std::string s(text);
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw Error(ErrorKind::kInvalidArgument, "expected YYYY-MM-DD, got '" + s + "'");
  }
  return make_date(y, m, d);
}

std::string format_date(Date date) {
  std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(Date date) { return static_cast<int>(std::chrono::year_month_day{date}.year()); }

unsigned month_of(Date date) {
  return static_cast<unsigned>(std::chrono::year_month_day{date}.month());
}

std::int64_t DateRange::start_epoch_seconds() const {
  return static_cast<std::int64_t>(first.time_since_epoch().count()) * kSecondsPerDay;
}

std::string format_hhmm(int minute) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minute / 60, minute % 60);
  return buf;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "not a number: " + std::string(text));
  }
  return v;
}

long long parse_int(std::string_view text) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "not an integer: " + std::string(text));
  }
  return v;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ (index * 0xd1342543de82ef95ULL + 1));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(seed, h);
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::atomic<unsigned> g_max_threads{0};
thread_local bool t_in_parallel = false;

}  // namespace

void set_max_threads(unsigned n) { g_max_threads.store(n); }

unsigned max_threads() {
  unsigned n = g_max_threads.load();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(max_threads(), n);
  // Nested regions run inline so the thread cap holds globally.
  if (workers <= 1 || t_in_parallel) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    t_in_parallel = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    t_in_parallel = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace lumirec
