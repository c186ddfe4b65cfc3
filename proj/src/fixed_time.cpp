#include "tftps/fixed_time.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "tftps/errors.hpp"

namespace tftps::fixed_time {

namespace {

std::mutex g_handler_mutex;
std::function<void(const OverrunEvent&)> g_handler;
std::atomic<std::uint64_t> g_overruns{0};

constexpr auto kSpinWindow = std::chrono::milliseconds(1);

}  // namespace

void set_overrun_handler(std::function<void(const OverrunEvent&)> handler) {
    std::lock_guard lock(g_handler_mutex);
    g_handler = std::move(handler);
}

std::uint64_t overrun_count() { return g_overruns.load(); }

namespace detail {

void report_overrun(const OverrunEvent& event) {
    g_overruns.fetch_add(1);
    std::function<void(const OverrunEvent&)> handler;
    {
        std::lock_guard lock(g_handler_mutex);
        handler = g_handler;
    }
    if (handler) handler(event);
}

void pad_until(Clock::time_point deadline) {
    const auto now = Clock::now();
    if (deadline - now > kSpinWindow) std::this_thread::sleep_until(deadline - kSpinWindow);
    while (Clock::now() < deadline) {
    }
}

}  // namespace detail

void spin_for(Nanos d) {
    const auto until = Clock::now() + d;
    while (Clock::now() < until) {
    }
}

TimeBudget budget_from_samples(const OpClass& op_class, const std::vector<Nanos>& samples, double safety_factor) {
    if (samples.empty()) throw ParameterError("budget_from_samples: no samples");
    if (!(safety_factor >= 1.0)) throw ParameterError("budget_from_samples: safety factor must be >= 1");
    const Nanos worst = *std::max_element(samples.begin(), samples.end());
    const auto scaled = static_cast<std::int64_t>(std::ceil(static_cast<double>(worst.count()) * safety_factor));
    TimeBudget budget{op_class, Nanos(std::max<std::int64_t>(scaled, 1)), samples.size(), safety_factor};
    return budget;
}

TimeBudget calibrate(const OpClass& op_class, const std::function<void(std::size_t)>& workload, std::size_t n_samples,
                     double safety_factor) {
    if (n_samples < 30) throw ParameterError("calibrate: at least 30 samples required");
    if (!(safety_factor >= 1.0)) throw ParameterError("calibrate: safety factor must be >= 1");
    std::vector<Nanos> samples;
    samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        try {
            samples.push_back(observe([&] { workload(i); }, op_class).sample.elapsed);
        } catch (const std::exception& e) {
            throw CalibrationError("calibrate " + op_class.label() + ": workload failed: " + e.what());
        }
    }
    return budget_from_samples(op_class, samples, safety_factor);
}

BudgetTable::BudgetTable(const BudgetTable& other) {
    std::lock_guard lock(other.mutex_);
    budgets_ = other.budgets_;
}

BudgetTable& BudgetTable::operator=(const BudgetTable& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    budgets_ = other.budgets_;
    return *this;
}

void BudgetTable::put(const TimeBudget& budget) {
    std::lock_guard lock(mutex_);
    budgets_[budget.op_class] = budget;
}

std::optional<TimeBudget> BudgetTable::find(const OpClass& op_class) const {
    std::lock_guard lock(mutex_);
    auto it = budgets_.find(op_class);
    if (it == budgets_.end()) return std::nullopt;
    return it->second;
}

TimeBudget BudgetTable::require(const OpClass& op_class) const {
    auto found = find(op_class);
    if (!found) {
        throw CalibrationError("no calibrated budget for " + op_class.label() + "; run `tftps calibrate` first");
    }
    return *found;
}

std::vector<TimeBudget> BudgetTable::all() const {
    std::lock_guard lock(mutex_);
    std::vector<TimeBudget> out;
    for (const auto& [_, b] : budgets_) out.push_back(b);
    return out;
}

bool BudgetTable::empty() const {
    std::lock_guard lock(mutex_);
    return budgets_.empty();
}

std::string BudgetTable::serialize() const {
    std::ostringstream out;
    for (const auto& b : all()) out << b.op_class.name << ':' << b.op_class.input_length << '=' << b.budget.count() << '\n';
    return out.str();
}

BudgetTable BudgetTable::parse(const std::string& text) {
    BudgetTable table;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.rfind(':');
        const auto eq = line.rfind('=');
        if (colon == std::string::npos || eq == std::string::npos || eq < colon || colon == 0) {
            throw ConfigError("calibration line " + std::to_string(lineno) + ": expected <op>:<length>=<ns>");
        }
        try {
            std::size_t used = 0;
            const std::string len_text = line.substr(colon + 1, eq - colon - 1);
            const std::string ns_text = line.substr(eq + 1);
            const auto length = std::stoull(len_text, &used);
            if (used != len_text.size()) throw std::invalid_argument("length");
            const auto ns = std::stoll(ns_text, &used);
            if (used != ns_text.size() || ns <= 0) throw std::invalid_argument("budget");
            table.put(TimeBudget{OpClass{line.substr(0, colon), length}, Nanos(ns), 0, 1.0});
        } catch (const std::logic_error&) {
            throw ConfigError("calibration line " + std::to_string(lineno) + ": bad number");
        }
    }
    return table;
}

BudgetTable BudgetTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read calibration file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

void BudgetTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write calibration file " + path);
    out << serialize();
    if (!out) throw IoError("write failed for " + path);
}

std::string calibration_path(const std::string& fallback) {
    if (const char* env = std::getenv("TFTPS_CALIBRATION"); env != nullptr && *env != '\0') return env;
    return fallback;
}

}  // namespace tftps::fixed_time
