#include "rops/plan_json.hpp"

#include "rops/errors.hpp"

#include "json.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace rops {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
    throw IoError("plan file " + origin + ": " + what);
}

void expect_object(const json& v, const char* where, const std::string& origin) {
    if (!v.is_object()) fail(origin, std::string(where) + " must be a JSON object");
}

// strictness lives here: every object walks its keys against a whitelist
void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const char* where, const std::string& origin) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok)
            fail(origin, "unknown field '" + it.key() + "' in " + where);
    }
}

const json& require(const json& obj, const char* key, const char* where,
                    const std::string& origin) {
    auto it = obj.find(key);
    if (it == obj.end())
        fail(origin, std::string("missing field '") + key + "' in " + where);
    return *it;
}

double get_num(const json& obj, const char* key, const char* where,
               const std::string& origin) {
    const json& v = require(obj, key, where, origin);
    if (!v.is_number())
        fail(origin, std::string("field '") + key + "' in " + where + " must be a number");
    return v.get<double>();
}

int get_int(const json& obj, const char* key, const char* where, const std::string& origin) {
    const json& v = require(obj, key, where, origin);
    if (!v.is_number_integer())
        fail(origin, std::string("field '") + key + "' in " + where + " must be an integer");
    return v.get<int>();
}

std::string get_str(const json& obj, const char* key, const char* where,
                    const std::string& origin) {
    const json& v = require(obj, key, where, origin);
    if (!v.is_string())
        fail(origin, std::string("field '") + key + "' in " + where + " must be a string");
    return v.get<std::string>();
}

TwoSidedSpec parse_two_sided(const json& obj, const char* where, const std::string& origin) {
    expect_object(obj, where, origin);
    expect_keys(obj, {"mean", "lower", "upper", "q_low", "q_high", "p_low"}, where, origin);
    TwoSidedSpec s;
    s.mean = get_num(obj, "mean", where, origin);
    s.lower = get_num(obj, "lower", where, origin);
    s.upper = get_num(obj, "upper", where, origin);
    s.q_low = get_num(obj, "q_low", where, origin);
    s.q_high = get_num(obj, "q_high", where, origin);
    s.p_low = get_num(obj, "p_low", where, origin);
    return s;
}

DurationSpec parse_duration(const json& obj, const std::string& task_id,
                            const std::string& origin) {
    const std::string where = "duration_dist of task '" + task_id + "'";
    expect_object(obj, where.c_str(), origin);
    const std::string kind = get_str(obj, "kind", where.c_str(), origin);
    DurationSpec d;
    if (kind == "two_sided") {
        // the whitelist depends on the kind, so a stray sub-object of the
        // other family is caught as an unknown field
        expect_keys(obj, {"kind", "two_sided"}, where.c_str(), origin);
        d.kind = DurationSpec::Kind::two_sided;
        d.two_sided =
            parse_two_sided(require(obj, "two_sided", where.c_str(), origin), where.c_str(),
                            origin);
    } else if (kind == "weibull") {
        expect_keys(obj, {"kind", "weibull"}, where.c_str(), origin);
        const json& w = require(obj, "weibull", where.c_str(), origin);
        expect_object(w, where.c_str(), origin);
        expect_keys(w, {"shape", "scale", "lower", "upper"}, where.c_str(), origin);
        d.kind = DurationSpec::Kind::weibull;
        d.weibull.shape = get_num(w, "shape", where.c_str(), origin);
        d.weibull.scale = get_num(w, "scale", where.c_str(), origin);
        d.weibull.lower = get_num(w, "lower", where.c_str(), origin);
        d.weibull.upper = get_num(w, "upper", where.c_str(), origin);
    } else {
        fail(origin, "duration_dist kind of task '" + task_id + "' must be \"two_sided\" or "
                     "\"weibull\", got \"" + kind + "\"");
    }
    return d;
}

} // namespace

Plan parse_plan_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(origin, std::string("invalid JSON: ") + e.what());
    }
    expect_object(doc, "the document root", origin);
    expect_keys(doc, {"grid", "projects", "tasks", "parameters", "bindings"},
                "the document root", origin);

    Plan plan;

    const json& grid = require(doc, "grid", "the document root", origin);
    expect_object(grid, "grid", origin);
    expect_keys(grid, {"t0", "horizon", "n_nodes"}, "grid", origin);
    plan.grid.t0 = get_num(grid, "t0", "grid", origin);
    plan.grid.horizon = get_num(grid, "horizon", "grid", origin);
    plan.grid.n_nodes = get_int(grid, "n_nodes", "grid", origin);

    const json& projects = require(doc, "projects", "the document root", origin);
    if (!projects.is_array()) fail(origin, "'projects' must be an array of strings");
    for (const json& p : projects) {
        if (!p.is_string()) fail(origin, "'projects' must be an array of strings");
        plan.projects.push_back(p.get<std::string>());
    }

    const json& tasks = require(doc, "tasks", "the document root", origin);
    if (!tasks.is_array()) fail(origin, "'tasks' must be an array of objects");
    for (const json& t : tasks) {
        expect_object(t, "a task entry", origin);
        TaskSpec task;
        task.id = get_str(t, "id", "a task entry", origin);
        const std::string where = "task '" + task.id + "'";
        expect_keys(t,
                    {"id", "project_id", "allocated_cost", "scheduled_duration",
                     "duration_dist", "cost_width", "predecessors"},
                    where.c_str(), origin);
        task.project_id = get_str(t, "project_id", where.c_str(), origin);
        task.allocated_cost = get_num(t, "allocated_cost", where.c_str(), origin);
        task.scheduled_duration = get_num(t, "scheduled_duration", where.c_str(), origin);
        task.duration_dist =
            parse_duration(require(t, "duration_dist", where.c_str(), origin), task.id, origin);
        task.cost_width = parse_two_sided(require(t, "cost_width", where.c_str(), origin),
                                          ("cost_width of " + where).c_str(), origin);
        if (auto it = t.find("predecessors"); it != t.end()) {
            if (!it->is_array())
                fail(origin, "predecessors of " + where + " must be an array of strings");
            for (const json& p : *it) {
                if (!p.is_string())
                    fail(origin, "predecessors of " + where + " must be an array of strings");
                task.predecessors.push_back(p.get<std::string>());
            }
        }
        plan.tasks.push_back(std::move(task));
    }

    if (auto it = doc.find("parameters"); it != doc.end()) {
        if (!it->is_array()) fail(origin, "'parameters' must be an array of objects");
        for (const json& p : *it) {
            expect_object(p, "a parameter entry", origin);
            expect_keys(p, {"name", "lower", "upper", "value"}, "a parameter entry", origin);
            ParamSpec spec;
            spec.name = get_str(p, "name", "a parameter entry", origin);
            spec.lower = get_num(p, "lower", "a parameter entry", origin);
            spec.upper = get_num(p, "upper", "a parameter entry", origin);
            // omitted value means unset; the optimizer then starts mid-box
            spec.value = p.contains("value") ? get_num(p, "value", "a parameter entry", origin)
                                             : 0.0;
            plan.parameters.push_back(std::move(spec));
        }
    }

    if (auto it = doc.find("bindings"); it != doc.end()) {
        if (!it->is_array()) fail(origin, "'bindings' must be an array of objects");
        for (const json& b : *it) {
            expect_object(b, "a binding entry", origin);
            expect_keys(b, {"parameter", "task", "field"}, "a binding entry", origin);
            Binding bind;
            bind.parameter = get_str(b, "parameter", "a binding entry", origin);
            bind.task = get_str(b, "task", "a binding entry", origin);
            bind.field = get_str(b, "field", "a binding entry", origin);
            plan.bindings.push_back(std::move(bind));
        }
    }

    return plan;
}

Plan load_plan_file(const std::string& path) {
    return parse_plan_text(read_file(path), path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("failed while reading '" + path + "'");
    return buf.str();
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace rops
