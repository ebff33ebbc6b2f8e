#include "rtsim/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

namespace rtsim {

using json = nlohmann::json;

namespace {

std::string escape(const std::string& key) {
    std::string out;
    for (const char c : key) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError((where.empty() ? std::string("/") : where) + ": " + what);
}

// Object reader that remembers which keys were read so that leftovers
// (typos, unsupported options) are reported.
class Obj {
public:
    Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail(where_, "expected an object");
    }

    const std::string& where() const { return where_; }
    std::string at(const std::string& key) const { return where_ + "/" + escape(key); }
    bool has(const std::string& key) const { return j_.contains(key); }

    const json& get(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) fail(at(key), "missing required entry");
        return j_.at(key);
    }
    const json* find(const std::string& key) {
        used_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    double number(const std::string& key, std::optional<double> fallback = {}) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) fail(at(key), "missing required entry");
            return *fallback;
        }
        if (!v->is_number()) fail(at(key), "expected a number");
        return v->get<double>();
    }
    std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = {}) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) fail(at(key), "missing required entry");
            return *fallback;
        }
        if (!v->is_number_integer()) fail(at(key), "expected an integer");
        return v->get<std::int64_t>();
    }
    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) fail(at(key), "expected true or false");
        return v->get<bool>();
    }
    std::string string(const std::string& key, std::optional<std::string> fallback = {}) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) fail(at(key), "missing required entry");
            return *fallback;
        }
        if (!v->is_string()) fail(at(key), "expected a string");
        return v->get<std::string>();
    }
    Vec3 vec3(const std::string& key, std::optional<Vec3> fallback = {}) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) fail(at(key), "missing required entry");
            return *fallback;
        }
        return to_vec3(*v, at(key));
    }
    Obj object(const std::string& key) { return Obj(get(key), at(key)); }
    const json& array(const std::string& key) {
        const json& v = get(key);
        if (!v.is_array()) fail(at(key), "expected an array");
        return v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(at(it.key()), "unknown entry");
    }

    static Vec3 to_vec3(const json& v, const std::string& where) {
        if (!v.is_array() || v.size() != 3) fail(where, "expected an array of 3 numbers");
        Vec3 out;
        for (int i = 0; i < 3; ++i) {
            if (!v[i].is_number()) fail(where + "/" + std::to_string(i), "expected a number");
            out[i] = v[i].get<double>();
        }
        return out;
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> used_;
};

Quat read_quat(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 4) fail(where, "expected a quaternion [w, x, y, z]");
    double c[4];
    for (int i = 0; i < 4; ++i) {
        if (!v[i].is_number()) fail(where + "/" + std::to_string(i), "expected a number");
        c[i] = v[i].get<double>();
    }
    Quat q(c[0], c[1], c[2], c[3]);
    if (!(q.norm() > 1e-12)) fail(where, "quaternion has zero length");
    return q.normalized();
}

RigidTransform read_transform(Obj o) {
    RigidTransform t;
    t.translation = o.vec3("translation", Vec3::Zero());
    if (const json* r = o.find("rotation")) t.orientation = read_quat(*r, o.at("rotation"));
    o.finish();
    return t;
}

RigidTransform transform_or_identity(Obj& parent, const std::string& key) {
    if (!parent.has(key)) {
        parent.find(key);
        return RigidTransform::identity();
    }
    return read_transform(parent.object(key));
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

NodeSelector read_selector(Obj o) {
    NodeSelector s;
    if (const json* n = o.find("nodes")) {
        if (!n->is_array()) fail(o.at("nodes"), "expected an array of node indices");
        for (std::size_t i = 0; i < n->size(); ++i) {
            if (!(*n)[i].is_number_integer()) fail(o.at("nodes") + "/" + std::to_string(i), "expected an integer");
            s.nodes.push_back((*n)[i].get<Index>());
        }
    }
    if (o.has("box")) {
        Obj b = o.object("box");
        Aabb box;
        box.lo = b.vec3("min");
        box.hi = b.vec3("max");
        b.finish();
        if ((box.lo.array() > box.hi.array()).any()) fail(b.where(), "box min exceeds max");
        s.box = box;
    }
    o.finish();
    if (s.empty()) fail(o.where(), "selects no nodes: give 'nodes' or 'box'");
    return s;
}

MechanicalParams read_mechanics(Obj o) {
    MechanicalParams m;
    const auto model = o.string("model", "fem");
    if (model == "fem")
        m.model = MaterialModel::fem;
    else if (model == "mass_spring")
        m.model = MaterialModel::mass_spring;
    else
        fail(o.at("model"), "unknown model '" + model + "' (fem, mass_spring)");
    m.young_modulus = o.number("young_modulus", m.young_modulus);
    m.poisson_ratio = o.number("poisson_ratio", m.poisson_ratio);
    m.density = o.number("density", m.density);
    m.stiffness = o.number("stiffness", m.stiffness);
    m.total_mass = o.number("total_mass", m.total_mass);
    m.rayleigh_mass = o.number("rayleigh_mass", m.rayleigh_mass);
    m.rayleigh_stiffness = o.number("rayleigh_stiffness", m.rayleigh_stiffness);
    if (o.has("tearing_threshold")) m.tearing_threshold = o.number("tearing_threshold");
    o.finish();
    try {
        m.validate();
    } catch (const ConfigError& e) {
        fail(o.where(), e.what());
    }
    return m;
}

SolverConfig read_solver(Obj o) {
    SolverConfig s;
    const auto integrator = o.string("integrator", "implicit_euler");
    if (integrator == "implicit_euler")
        s.integrator = IntegratorKind::implicit_euler;
    else if (integrator == "explicit_euler")
        s.integrator = IntegratorKind::explicit_euler;
    else
        fail(o.at("integrator"), "unknown integrator '" + integrator + "' (implicit_euler, explicit_euler)");
    const auto solver = o.string("linear_solver", "cg");
    if (solver == "cg")
        s.linear_solver = LinearSolverKind::cg;
    else if (solver == "cholesky")
        s.linear_solver = LinearSolverKind::cholesky;
    else
        fail(o.at("linear_solver"), "unknown linear solver '" + solver + "' (cg, cholesky)");
    s.cg_tolerance = o.number("tolerance", s.cg_tolerance);
    s.cg_max_iterations = static_cast<int>(o.integer("max_iterations", s.cg_max_iterations));
    o.finish();
    try {
        s.validate();
    } catch (const ConfigError& e) {
        fail(o.where(), e.what());
    }
    return s;
}

CollisionParams read_collision(Obj o) {
    CollisionParams c;
    c.proximity = o.number("proximity", c.proximity);
    c.group = static_cast<int>(o.integer("group", c.group));
    c.self_collision = o.boolean("self_collision", c.self_collision);
    c.cutting = o.boolean("cutting", c.cutting);
    if (const json* p = o.find("primitives")) {
        if (!p->is_array()) fail(o.at("primitives"), "expected an array of point, line, triangle");
        c.primitives = 0;
        for (std::size_t i = 0; i < p->size(); ++i) {
            const auto where = o.at("primitives") + "/" + std::to_string(i);
            if (!(*p)[i].is_string()) fail(where, "expected a string");
            const auto name = (*p)[i].get<std::string>();
            if (name == "point")
                c.primitives |= kPoint;
            else if (name == "line")
                c.primitives |= kLine;
            else if (name == "triangle")
                c.primitives |= kTriangle;
            else
                fail(where, "unknown primitive '" + name + "'");
        }
    }
    o.finish();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        fail(o.where(), e.what());
    }
    return c;
}

VisualConfig read_visual(Obj o, const std::filesystem::path& base) {
    VisualConfig v;
    if (o.has("mesh")) v.mesh = resolve(base, o.string("mesh"));
    v.subdivision = static_cast<int>(o.integer("subdivision", 0));
    if (v.subdivision < 0 || v.subdivision > kMaxSubdivisionLevel)
        fail(o.at("subdivision"), "must lie in 0.." + std::to_string(kMaxSubdivisionLevel));
    o.finish();
    return v;
}

ShapeConfig read_shape(Obj o, const std::filesystem::path& base) {
    ShapeConfig s;
    int given = 0;
    if (o.has("box")) {
        s.kind = ShapeConfig::Kind::box;
        s.half_extents = o.vec3("box");
        if ((s.half_extents.array() <= 0.0).any()) fail(o.at("box"), "half extents must be > 0");
        ++given;
    }
    if (o.has("sphere")) {
        s.kind = ShapeConfig::Kind::sphere;
        s.radius = o.number("sphere");
        if (!(s.radius > 0.0)) fail(o.at("sphere"), "radius must be > 0");
        ++given;
    }
    if (o.has("mesh")) {
        s.kind = ShapeConfig::Kind::mesh;
        s.mesh = resolve(base, o.string("mesh"));
        ++given;
    }
    o.finish();
    if (given != 1) fail(o.where(), "give exactly one of 'box', 'sphere', 'mesh'");
    return s;
}

InstrumentConfig read_instrument(Obj o, double& opening) {
    InstrumentConfig c;
    c.jaw_count = static_cast<int>(o.integer("jaw_count", c.jaw_count));
    c.shaft_length = o.number("shaft_length", c.shaft_length);
    c.jaw_length = o.number("jaw_length", c.jaw_length);
    c.hinge_axis = o.vec3("hinge_axis", c.hinge_axis);
    opening = o.number("opening", 0.0);
    o.finish();
    if (c.jaw_count != 1 && c.jaw_count != 2) fail(o.at("jaw_count"), "must be 1 or 2");
    if (!(c.hinge_axis.norm() > 0.0)) fail(o.at("hinge_axis"), "must be non-zero");
    c.hinge_axis.normalize();
    return c;
}

BodyConfig read_body(Obj o, const std::filesystem::path& base) {
    BodyConfig b;
    b.location = o.where();
    b.name = o.string("name");
    if (b.name.empty()) fail(o.at("name"), "must not be empty");
    const auto type = o.string("type");
    if (type == "soft") {
        b.rigid = false;
        auto& s = b.soft;
        s.mesh = resolve(base, o.string("mesh"));
        s.placement = transform_or_identity(o, "placement");
        if (o.has("mechanics")) s.mechanics = read_mechanics(o.object("mechanics"));
        if (o.has("solver")) s.solver = read_solver(o.object("solver"));
        if (o.has("pinned")) s.pinned = read_selector(o.object("pinned"));
        const bool dynamic = o.boolean("dynamic_topology", false);
        if (dynamic && !s.mechanics.tearing_threshold)
            fail(o.at("dynamic_topology"), "needs mechanics/tearing_threshold");
        if (!dynamic && s.mechanics.tearing_threshold)
            fail(o.at("mechanics") + "/tearing_threshold", "requires dynamic_topology: true");
        if (dynamic && s.mechanics.model != MaterialModel::fem)
            fail(o.at("dynamic_topology"), "tearing needs the fem model");
    } else if (type == "rigid") {
        b.rigid = true;
        auto& r = b.rigid_body;
        r.pose = transform_or_identity(o, "pose");
        r.mass = o.number("mass", r.mass);
        r.inertia = o.vec3("inertia", r.inertia);
        r.dynamic = o.boolean("dynamic", r.dynamic);
        r.gravity = o.boolean("gravity", r.gravity);
        r.damping = o.number("damping", r.damping);
        if (!(r.mass > 0.0)) fail(o.at("mass"), "must be > 0");
        if ((r.inertia.array() <= 0.0).any()) fail(o.at("inertia"), "moments must be > 0");
        if (!(r.damping >= 0.0)) fail(o.at("damping"), "must be >= 0");
        if (o.has("shape")) r.shape = read_shape(o.object("shape"), base);
        if (o.has("instrument")) r.instrument = read_instrument(o.object("instrument"), r.opening);
    } else {
        fail(o.at("type"), "unknown body type '" + type + "' (soft, rigid)");
    }
    if (o.has("visual")) b.visual = read_visual(o.object("visual"), base);
    if (o.has("collision")) b.collision = read_collision(o.object("collision"));
    o.finish();
    return b;
}

AttachmentSpec read_attachment(Obj o) {
    AttachmentSpec a;
    a.location = o.where();
    a.body = o.string("body");
    a.target = o.string("target");
    a.frame = static_cast<Index>(o.integer("frame", 0));
    a.nodes = read_selector(o.object("nodes"));
    const auto mode = o.string("mode", "direct");
    if (mode == "direct")
        a.barycentric = false;
    else if (mode == "barycentric")
        a.barycentric = true;
    else
        fail(o.at("mode"), "unknown mode '" + mode + "' (direct, barycentric)");
    if (const json* k = o.find("stiffness")) {
        if (k->is_string() && k->get<std::string>() == "pin")
            a.stiffness = kPinStiffness;
        else if (k->is_number() && k->get<double>() > 0.0)
            a.stiffness = k->get<double>();
        else
            fail(o.at("stiffness"), "expected a positive number or \"pin\"");
    }
    o.finish();
    return a;
}

ArticulationSpec read_articulation(Obj o) {
    ArticulationSpec a;
    a.location = o.where();
    a.body = o.string("body");
    const auto frames = o.integer("frames");
    if (frames < 2) fail(o.at("frames"), "an articulation needs at least 2 frames");
    a.frames = static_cast<std::size_t>(frames);
    const json& joints = o.array("joints");
    for (std::size_t i = 0; i < joints.size(); ++i) {
        Obj j(joints[i], o.at("joints") + "/" + std::to_string(i));
        JointConfig c;
        const auto type = j.string("type");
        if (type == "revolute")
            c.type = JointType::revolute;
        else if (type == "prismatic")
            c.type = JointType::prismatic;
        else
            fail(j.at("type"), "unknown joint type '" + type + "' (revolute, prismatic)");
        c.axis = j.vec3("axis");
        if (!(c.axis.norm() > 0.0)) fail(j.at("axis"), "must be non-zero");
        c.axis.normalize();
        c.parent = static_cast<Index>(j.integer("parent"));
        c.child = static_cast<Index>(j.integer("child"));
        c.parent_offset = transform_or_identity(j, "parent_offset");
        c.child_offset = transform_or_identity(j, "child_offset");
        c.lower = j.number("lower", c.lower);
        c.upper = j.number("upper", c.upper);
        j.finish();
        a.joints.push_back(c);
    }
    if (const json* v = o.find("values")) {
        if (!v->is_array()) fail(o.at("values"), "expected an array of numbers");
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (!(*v)[i].is_number()) fail(o.at("values") + "/" + std::to_string(i), "expected a number");
            a.values.push_back((*v)[i].get<double>());
        }
    } else {
        a.values.assign(a.joints.size(), 0.0);
    }
    o.finish();
    return a;
}

HapticSpec read_haptic(Obj o) {
    HapticSpec h;
    h.location = o.where();
    h.name = o.string("name");
    h.body = o.string("body");
    h.frame = static_cast<Index>(o.integer("frame", 0));
    auto& d = h.device;
    d.origin = transform_or_identity(o, "origin");
    d.scale = o.number("scale", d.scale);
    d.linear_stiffness = o.number("linear_stiffness", d.linear_stiffness);
    d.angular_stiffness = o.number("angular_stiffness", d.angular_stiffness);
    const json& wps = o.array("waypoints");
    for (std::size_t i = 0; i < wps.size(); ++i) {
        Obj w(wps[i], o.at("waypoints") + "/" + std::to_string(i));
        Waypoint p;
        p.time = w.number("t");
        p.pose.translation = w.vec3("position", Vec3::Zero());
        if (const json* r = w.find("rotation")) p.pose.orientation = read_quat(*r, w.at("rotation"));
        w.finish();
        d.waypoints.push_back(p);
    }
    o.finish();
    try {
        d.validate();
    } catch (const ConfigError& e) {
        fail(o.where(), e.what());
    }
    return h;
}

}  // namespace

std::vector<Index> NodeSelector::resolve(const std::vector<Vec3>& rest) const {
    std::vector<Index> out = nodes;
    if (box)
        for (std::size_t i = 0; i < rest.size(); ++i)
            if ((rest[i].array() >= box->lo.array()).all() && (rest[i].array() <= box->hi.array()).all())
                out.push_back(static_cast<Index>(i));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

const BodyConfig* SceneConfig::find(const std::string& name) const {
    for (const auto& b : bodies)
        if (b.name == name) return &b;
    return nullptr;
}

void SceneConfig::validate() const {
    try {
        scheduler.validate();
    } catch (const ConfigError& e) {
        fail("/scheduler", e.what());
    }
    if (!(visual_rate > 0.0)) fail("/visual_rate", "must be > 0");
    if (!(contact_stiffness >= 0.0)) fail("/contact_stiffness", "must be >= 0");
    if (!gravity.allFinite()) fail("/gravity", "must be finite");

    std::set<std::string> names;
    for (const auto& b : bodies) {
        if (!names.insert(b.name).second) fail(b.location + "/name", "duplicate body name '" + b.name + "'");
    }
    auto frames_of = [&](const BodyConfig& b) -> std::size_t {
        if (b.rigid_body.instrument) return static_cast<std::size_t>(b.rigid_body.instrument->jaw_count) + 1;
        for (const auto& a : articulations)
            if (a.body == b.name) return a.frames;
        return 1;
    };
    auto lookup = [&](const std::string& name, const std::string& where) -> const BodyConfig& {
        const auto* b = find(name);
        if (!b) fail(where, "unknown body '" + name + "'");
        return *b;
    };

    for (const auto& a : attachments) {
        const auto& side_a = lookup(a.body, a.location + "/body");
        if (side_a.rigid) fail(a.location + "/body", "attached body '" + a.body + "' must be soft");
        if (a.target == "world") {
            if (a.barycentric) fail(a.location + "/mode", "barycentric mode needs a soft target");
            continue;
        }
        if (a.target == a.body) fail(a.location + "/target", "a body cannot be attached to itself");
        const auto& side_b = lookup(a.target, a.location + "/target");
        if (side_b.rigid) {
            if (a.barycentric) fail(a.location + "/mode", "barycentric mode needs a soft target");
            if (a.frame < 0 || static_cast<std::size_t>(a.frame) >= frames_of(side_b))
                fail(a.location + "/frame", "frame out of range for body '" + a.target + "'");
        }
    }
    std::set<std::string> articulated;
    for (const auto& a : articulations) {
        const auto& b = lookup(a.body, a.location + "/body");
        if (!b.rigid) fail(a.location + "/body", "articulated body '" + a.body + "' must be rigid");
        if (b.rigid_body.instrument) fail(a.location + "/body", "body '" + a.body + "' is already an instrument");
        if (!articulated.insert(a.body).second) fail(a.location + "/body", "body '" + a.body + "' articulated twice");
        if (a.values.size() != a.joints.size()) fail(a.location + "/values", "need one value per joint");
        try {
            Articulation check(a.frames, a.joints);
            for (Index f = 1; f < static_cast<Index>(a.frames); ++f)
                if (check.is_root(f))
                    fail(a.location + "/joints", "frame " + std::to_string(f) + " is not driven by any joint");
            std::vector<RigidTransform> frames(a.frames);
            check.forward_kinematics(a.values, frames);
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            if (msg.rfind("/", 0) == 0) throw;
            fail(a.location, msg);
        }
    }
    std::set<std::string> device_names;
    for (const auto& h : haptics) {
        if (!device_names.insert(h.name).second) fail(h.location + "/name", "duplicate device name '" + h.name + "'");
        const auto& b = lookup(h.body, h.location + "/body");
        if (!b.rigid) fail(h.location + "/body", "controlled body '" + h.body + "' must be rigid");
        if (h.frame < 0 || static_cast<std::size_t>(h.frame) >= frames_of(b))
            fail(h.location + "/frame", "frame out of range for body '" + h.body + "'");
        if (h.frame != 0) fail(h.location + "/frame", "devices drive the root frame (0) of a body");
    }
}

SceneConfig parse_scene_config(std::istream& in, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scene config is not valid JSON: ") + e.what());
    }
    SceneConfig cfg;
    Obj root(doc, "");
    cfg.gravity = root.vec3("gravity", cfg.gravity);
    if (root.has("scheduler")) {
        Obj s = root.object("scheduler");
        cfg.scheduler.period = s.number("period", cfg.scheduler.period);
        cfg.scheduler.slack = s.number("slack", cfg.scheduler.slack);
        if (s.has("max_steps")) {
            const auto n = s.integer("max_steps");
            if (n <= 0) fail(s.at("max_steps"), "must be > 0");
            cfg.scheduler.max_steps = static_cast<std::uint64_t>(n);
        }
        cfg.scheduler.deterministic = s.boolean("deterministic", false);
        s.finish();
    }
    cfg.visual_rate = root.number("visual_rate", cfg.visual_rate);
    cfg.contact_stiffness = root.number("contact_stiffness", cfg.contact_stiffness);
    if (root.has("bodies")) {
        const json& bodies = root.array("bodies");
        for (std::size_t i = 0; i < bodies.size(); ++i)
            cfg.bodies.push_back(read_body(Obj(bodies[i], "/bodies/" + std::to_string(i)), base_dir));
    }
    if (root.has("attachments")) {
        const json& list = root.array("attachments");
        for (std::size_t i = 0; i < list.size(); ++i)
            cfg.attachments.push_back(read_attachment(Obj(list[i], "/attachments/" + std::to_string(i))));
    }
    if (root.has("articulations")) {
        const json& list = root.array("articulations");
        for (std::size_t i = 0; i < list.size(); ++i)
            cfg.articulations.push_back(read_articulation(Obj(list[i], "/articulations/" + std::to_string(i))));
    }
    if (root.has("haptic_devices")) {
        const json& list = root.array("haptic_devices");
        for (std::size_t i = 0; i < list.size(); ++i)
            cfg.haptics.push_back(read_haptic(Obj(list[i], "/haptic_devices/" + std::to_string(i))));
    }
    root.finish();
    cfg.validate();
    return cfg;
}

SceneConfig load_scene_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open scene config '" + path.string() + "'");
    return parse_scene_config(in, path.parent_path());
}

}  // namespace rtsim
