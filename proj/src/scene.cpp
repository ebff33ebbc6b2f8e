#include "rtsim/scene.hpp"

#include <chrono>
#include <cstring>
#include <map>
#include <numbers>
#include <thread>

namespace rtsim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

SurfaceMesh box_surface(const Vec3& h) {
    SurfaceMesh m;
    for (int k = 0; k < 8; ++k)
        m.vertices.emplace_back((k & 1 ? 1 : -1) * h.x(), (k & 2 ? 1 : -1) * h.y(), (k & 4 ? 1 : -1) * h.z());
    m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                   {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    return m;
}

SurfaceMesh sphere_surface(double r) {
    const double g = (1.0 + std::sqrt(5.0)) / 2.0;
    SurfaceMesh m;
    m.vertices = {{-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                  {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
    m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    // Two Loop-free midpoint refinements projected to the sphere.
    for (int level = 0; level < 2; ++level) {
        std::vector<Tri> tris;
        std::map<std::pair<Index, Index>, Index> mid;
        auto midpoint = [&](Index a, Index b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            const auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            m.vertices.push_back(0.5 * (m.vertices[a] + m.vertices[b]));
            return mid[key] = static_cast<Index>(m.vertices.size() - 1);
        };
        for (const auto& t : m.triangles) {
            const Index ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
            tris.push_back({t[0], ab, ca});
            tris.push_back({ab, t[1], bc});
            tris.push_back({ca, bc, t[2]});
            tris.push_back({ab, bc, ca});
        }
        m.triangles = std::move(tris);
    }
    for (auto& v : m.vertices) v = r * v.normalized();
    return m;
}

template <class F>
auto with_location(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const AssetError& e) {
        throw AssetError(where + ": " + e.what());
    } catch (const ParseError& e) {
        throw AssetError(where + ": " + e.what());
    } catch (const MeshError& e) {
        throw ConfigError(where + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

SurfaceMesh shape_surface(const ShapeConfig& s, const std::string& where) {
    switch (s.kind) {
        case ShapeConfig::Kind::box: return box_surface(s.half_extents);
        case ShapeConfig::Kind::sphere: return sphere_surface(s.radius);
        case ShapeConfig::Kind::mesh: return with_location(where + "/mesh", [&] { return load_surface_mesh(s.mesh); });
        case ShapeConfig::Kind::none: break;
    }
    throw ConfigError(where + ": a shape is required here");
}

void add_wrench(RigidBody& body, std::vector<Wrench>& wrenches, Index frame, const Vec3& point, const Vec3& force) {
    // Forces on kinematic (articulated) frames are carried by the root frame.
    const Index target = body.state.dynamic[frame] ? frame : 0;
    wrenches[target].force += force;
    wrenches[target].torque += (point - body.state.frames[target].translation).cross(force);
}

void fnv(std::uint64_t& h, const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
}

}  // namespace

// ---------------------------------------------------------------------------

Index Scene::body_index(const std::string& name) const {
    for (std::size_t i = 0; i < bodies.size(); ++i)
        if (bodies[i].name == name) return static_cast<Index>(i);
    return -1;
}

std::shared_ptr<const Snapshot> Scene::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Scene::publish_snapshot() {
    auto snap = std::make_shared<Snapshot>();
    snap->step = steps_;
    snap->time = time_;
    snap->positions.resize(bodies.size());
    snap->frames.resize(bodies.size());
    snap->topologies.resize(bodies.size());
    topology_cache_.resize(bodies.size());
    net_force_.resize(bodies.size(), 0.0);
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        const auto& b = bodies[i];
        if (b.rigid) {
            snap->frames[i] = b.rigid_body.state.frames;
            continue;
        }
        snap->positions[i] = b.soft.state.x;
        if (b.soft.topology) {
            auto& cached = topology_cache_[i];
            if (!cached || cached->version() != b.soft.topology->version())
                cached = std::make_shared<const DynamicTopology>(*b.soft.topology);
            snap->topologies[i] = cached;
        }
    }
    snap->net_force = net_force_;
    snap->checksum = state_checksum(*this);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
}

void Scene::set_subdivision(int level) {
    for (auto& v : visuals) {
        const SurfaceMesh base = v.visual->base();
        const auto positions = v.visual->base_positions();
        v.visual = std::make_unique<VisualBody>(base, level);
        v.visual->update(positions);
    }
}

std::uint64_t state_checksum(const Scene& scene) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& b : scene.bodies) {
        if (b.rigid) {
            for (const auto& f : b.rigid_body.state.frames) {
                fnv(h, f.translation.data(), 3 * sizeof(double));
                fnv(h, f.orientation.coeffs().data(), 4 * sizeof(double));
            }
            for (const auto& t : b.rigid_body.state.twists) {
                fnv(h, t.linear.data(), 3 * sizeof(double));
                fnv(h, t.angular.data(), 3 * sizeof(double));
            }
        } else {
            fnv(h, b.soft.state.x.data(), b.soft.state.x.size() * sizeof(double));
            fnv(h, b.soft.state.v.data(), b.soft.state.v.size() * sizeof(double));
        }
    }
    return h;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Scene> build_scene(const SceneConfig& config) {
    config.validate();
    auto scene = std::make_unique<Scene>();
    scene->config = config;
    scene->gravity = config.gravity;
    scene->contact_stiffness = config.contact_stiffness;
    scene->bodies.resize(config.bodies.size());

    for (std::size_t bi = 0; bi < config.bodies.size(); ++bi) {
        const auto& bc = config.bodies[bi];
        auto& body = scene->bodies[bi];
        const auto index = static_cast<Index>(bi);
        body.name = bc.name;
        body.rigid = bc.rigid;
        if (!bc.rigid) {
            auto& soft = body.soft;
            const auto& sc = bc.soft;
            soft.rest = with_location(bc.location + "/mesh", [&] { return load_tet_mesh(sc.mesh); });
            for (auto& v : soft.rest.vertices) v = sc.placement.apply(v);
            soft.mechanics = sc.mechanics;
            soft.solver = sc.solver;
            const auto n = soft.rest.vertices.size();
            std::vector<double> masses = sc.mechanics.model == MaterialModel::fem
                                             ? lumped_masses(soft.rest, sc.mechanics.density)
                                             : std::vector<double>(n, sc.mechanics.total_mass / static_cast<double>(n));
            soft.state = SoftBodyState(soft.rest.vertices, std::move(masses));
            if (sc.mechanics.model == MaterialModel::fem)
                soft.fem = std::make_unique<CorotationalFem>(soft.rest, sc.mechanics.young_modulus,
                                                             sc.mechanics.poisson_ratio);
            else
                soft.springs = std::make_unique<SpringNetwork>(
                    SpringNetwork::from_mesh(soft.rest, sc.mechanics.stiffness));
            if (!sc.pinned.empty()) {
                const auto pins = sc.pinned.resolve(soft.rest.vertices);
                if (pins.empty()) throw ConfigError(bc.location + "/pinned: selects no nodes");
                for (const Index i : pins) {
                    if (i < 0 || i >= static_cast<Index>(n))
                        throw ConfigError(bc.location + "/pinned: node " + std::to_string(i) + " out of range");
                    soft.state.pin(i);
                }
            }
            if (sc.mechanics.tearing_threshold)
                soft.topology.emplace(soft.rest, *sc.mechanics.tearing_threshold);
            if (bc.collision)
                soft.collision = with_location(bc.location + "/collision", [&] {
                    return scene->collision.attach_soft(index, boundary_surface(soft.rest),
                                                        static_cast<Index>(n), *bc.collision);
                });
            if (bc.visual) {
                VisualEntry v;
                v.body = index;
                const bool shared = bc.visual->mesh.empty();
                SurfaceMesh surface = shared ? boundary_surface(soft.rest) : with_location(bc.location + "/visual/mesh", [&] {
                    return load_surface_mesh(bc.visual->mesh);
                });
                if (!shared)
                    for (auto& p : surface.vertices) p = sc.placement.apply(p);
                v.scheme = select_mapping_scheme(false, shared, soft.topology.has_value());
                if (v.scheme == MappingScheme::dynamic_barycentric) {
                    v.dynamic = bind_dynamic_visual(surface, *soft.topology);
                } else if (v.scheme == MappingScheme::barycentric) {
                    v.map = BarycentricMap::bind(surface.vertices, soft.rest);
                }
                v.visual = with_location(bc.location + "/visual", [&] {
                    return std::make_unique<VisualBody>(surface, bc.visual->subdivision);
                });
                v.transform = scene->transforms.add();
                scene->visuals.push_back(std::move(v));
            }
        } else {
            auto& rigid = body.rigid_body;
            const auto& rc = bc.rigid_body;
            rigid.gravity = rc.gravity;
            rigid.damping = rc.damping;
            rigid.state.add_frame(rc.pose, rc.mass, rc.inertia.asDiagonal(), rc.dynamic);
            if (rc.instrument) {
                rigid.instrument = with_location(bc.location + "/instrument",
                                                 [&] { return make_articulated_instrument(*rc.instrument); });
                rigid.articulation = rigid.instrument->articulation();
                rigid.joint_values = rigid.instrument->joint_values(rc.opening);
            }
            std::optional<SurfaceMesh> local;
            if (rc.shape.kind != ShapeConfig::Kind::none) local = shape_surface(rc.shape, bc.location + "/shape");
            if (bc.collision) {
                if (!local) throw ConfigError(bc.location + "/collision: a rigid collision model needs a shape");
                rigid.collision = with_location(bc.location + "/collision", [&] {
                    return scene->collision.attach_rigid(index, 0, *local, *bc.collision);
                });
            }
            if (bc.visual) {
                VisualEntry v;
                v.body = index;
                v.scheme = select_mapping_scheme(true, false, false);
                SurfaceMesh surface;
                if (!bc.visual->mesh.empty())
                    surface = with_location(bc.location + "/visual/mesh",
                                            [&] { return load_surface_mesh(bc.visual->mesh); });
                else if (local)
                    surface = *local;
                else
                    throw ConfigError(bc.location + "/visual: give a mesh or a shape");
                v.local = surface.vertices;
                v.visual = with_location(bc.location + "/visual", [&] {
                    return std::make_unique<VisualBody>(surface, bc.visual->subdivision);
                });
                v.transform = scene->transforms.add();
                scene->transforms.map_to_frame(v.transform, rc.pose);
                scene->visuals.push_back(std::move(v));
            }
        }
    }

    for (const auto& a : config.articulations) {
        auto& rigid = scene->bodies[scene->body_index(a.body)].rigid_body;
        rigid.articulation = with_location(a.location, [&] { return Articulation(a.frames, a.joints); });
        rigid.joint_values = a.values;
    }
    // Articulated frames are kinematic; place them once.
    for (auto& body : scene->bodies) {
        if (!body.rigid || !body.rigid_body.articulation) continue;
        auto& rigid = body.rigid_body;
        const auto count = rigid.articulation->frame_count();
        while (rigid.state.frame_count() < count)
            rigid.state.add_frame(rigid.state.frames[0], rigid.state.masses[0], rigid.state.inertia[0], false);
        rigid.articulation->forward_kinematics(rigid.joint_values, rigid.state.frames);
    }

    for (const auto& a : config.attachments) {
        const Index ia = scene->body_index(a.body);
        auto& side_a = scene->bodies[ia].soft;
        AttachmentConfig cfg;
        cfg.stiffness = a.stiffness;
        cfg.barycentric = a.barycentric;
        cfg.node_indices = a.nodes.resolve(side_a.rest.vertices);
        if (cfg.node_indices.empty()) throw ConfigError(a.location + "/nodes: selects no nodes");
        SceneAttachment sa;
        sa.attachment = with_location(a.location, [&]() -> Attachment {
            if (a.target == "world") return attach_to_world(ia, side_a.state, cfg);
            const Index ib = scene->body_index(a.target);
            auto& b = scene->bodies[ib];
            if (b.rigid) {
                return attach_to_rigid(ia, side_a.state, ib, a.frame, b.rigid_body.state.frames[a.frame], cfg);
            }
            TetMesh mesh = b.soft.rest;
            mesh.tets = b.soft.tets();
            return attach_to_soft(ia, side_a.state, ib, b.soft.state, mesh, b.soft.version(), cfg);
        });
        sa.rigid_target = sa.attachment.target == AttachmentTarget::rigid_frame;
        if (sa.attachment.target == AttachmentTarget::world && sa.attachment.pins()) {
            for (const Index i : sa.attachment.nodes) side_a.state.pin(i);
            continue;
        }
        if (sa.attachment.pins())
            for (const Index i : sa.attachment.nodes) side_a.state.kinematic[i] = 1;
        scene->attachments.push_back(std::move(sa));
    }

    for (const auto& h : config.haptics) {
        HapticDevice d;
        d.name = h.name;
        d.body = scene->body_index(h.body);
        d.frame = h.frame;
        d.config = h.device;
        d.pose = virtual_haptic_pose(d.config, 0.0);
        scene->devices.push_back(std::move(d));
    }

    scene->publish_snapshot();
    return scene;
}

// ---------------------------------------------------------------------------

StepReport physics_tick(Scene& scene, double dt) {
    const auto start = Clock::now();
    StepReport report;
    report.step = scene.steps_;
    report.dt = dt;
    const auto nb = scene.bodies.size();

    // 1. Collision detection.
    auto phase = Clock::now();
    std::vector<Contact> contacts;
    if (scene.collision.size() > 0) {
        for (auto& body : scene.bodies) {
            if (body.rigid && body.rigid_body.collision)
                scene.collision.update(*body.rigid_body.collision, body.rigid_body.state.frames[0]);
            else if (!body.rigid && body.soft.collision)
                scene.collision.update(*body.soft.collision, body.soft.state);
        }
        contacts = detect_contacts(scene.collision);
    }
    report.contacts = contacts.size();
    report.phase_seconds[0] = seconds_since(phase);

    // 2. Collision response.
    phase = Clock::now();
    std::vector<VecX> external(nb);
    std::vector<std::vector<Wrench>> wrenches(nb);
    std::vector<std::vector<FrameStiffness>> frame_stiffness(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        auto& b = scene.bodies[i];
        if (b.rigid) {
            wrenches[i].assign(b.rigid_body.state.frame_count(), Wrench{});
            frame_stiffness[i].assign(b.rigid_body.state.frame_count(), FrameStiffness{});
        } else {
            external[i] = VecX::Zero(b.soft.state.x.size());
        }
    }
    if (!contacts.empty()) {
        for (const auto& pf : penalty_response(scene.collision, contacts, scene.contact_stiffness)) {
            auto& b = scene.bodies[pf.body];
            if (b.rigid)
                add_wrench(b.rigid_body, wrenches[pf.body], pf.frame, pf.point, pf.force);
            else
                external[pf.body].segment<3>(3 * pf.node) += pf.force;
        }
    }
    report.phase_seconds[1] = seconds_since(phase);

    // 3. Force assembly: gravity, attachments, haptic coupling.
    phase = Clock::now();
    for (std::size_t i = 0; i < nb; ++i) {
        auto& b = scene.bodies[i];
        if (b.rigid) {
            auto& s = b.rigid_body.state;
            if (b.rigid_body.gravity)
                for (std::size_t f = 0; f < s.frame_count(); ++f)
                    if (s.dynamic[f]) wrenches[i][f].force += s.masses[f] * scene.gravity;
        } else {
            auto& s = b.soft.state;
            for (Index n = 0; n < s.node_count(); ++n) external[i].segment<3>(3 * n) += s.masses[n] * scene.gravity;
            b.soft.anchors.anchors().clear();
            b.soft.proxies.links().clear();
        }
    }
    for (auto& sa : scene.attachments) {
        auto& att = sa.attachment;
        auto& a = scene.bodies[att.body_a].soft;
        AttachmentTargets targets;
        if (att.target == AttachmentTarget::world) {
            targets = attachment_targets(att, nullptr, nullptr, 0, nullptr, nullptr);
        } else if (sa.rigid_target) {
            const auto& rb = scene.bodies[att.body_b].rigid_body.state;
            targets = attachment_targets(att, nullptr, nullptr, 0, &rb.frames[att.frame], &rb.twists[att.frame]);
        } else {
            auto& b = scene.bodies[att.body_b].soft;
            // Element identity survives tearing, so proxies stay valid.
            att.proxies.set_topology_version(b.version());
            targets = attachment_targets(att, &b.state, &b.tets(), b.version(), nullptr, nullptr);
        }
        if (att.pins()) {
            for (std::size_t k = 0; k < att.nodes.size(); ++k) {
                a.state.x.segment<3>(3 * att.nodes[k]) = targets.positions[k];
                a.state.v.segment<3>(3 * att.nodes[k]) = targets.velocities[k];
            }
            continue;
        }
        for (std::size_t k = 0; k < att.nodes.size(); ++k)
            a.anchors.anchors().push_back({att.nodes[k], targets.positions[k], att.stiffness});
        if (att.target == AttachmentTarget::soft_direct || att.target == AttachmentTarget::soft_barycentric) {
            auto& b = scene.bodies[att.body_b].soft;
            for (const auto& l : reaction_links(att, a.state, b.tets())) b.proxies.links().push_back(l);
        } else if (sa.rigid_target) {
            auto& rb = scene.bodies[att.body_b].rigid_body;
            for (std::size_t k = 0; k < att.nodes.size(); ++k) {
                const Vec3 pull = att.stiffness * (targets.positions[k] - a.state.position(att.nodes[k]));
                add_wrench(rb, wrenches[att.body_b], att.frame, targets.positions[k], -pull);
            }
        }
    }
    for (auto& d : scene.devices) {
        d.pose = virtual_haptic_pose(d.config, scene.time_);
        auto& rb = scene.bodies[d.body].rigid_body;
        wrenches[d.body][d.frame] += coupling_wrench(d.pose, rb.state.frames[d.frame], d.config.linear_stiffness,
                                                     d.config.angular_stiffness);
        frame_stiffness[d.body][d.frame].linear += d.config.linear_stiffness;
        frame_stiffness[d.body][d.frame].angular += d.config.angular_stiffness;
    }
    scene.net_force_.assign(nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
        auto& b = scene.bodies[i];
        Vec3 net = Vec3::Zero();
        if (b.rigid) {
            for (const auto& w : wrenches[i]) net += w.force;
        } else {
            VecX f = external[i];
            b.soft.anchors.add_forces(b.soft.state, f);
            b.soft.proxies.add_forces(b.soft.state, f);
            for (Index n = 0; n < b.soft.state.node_count(); ++n) net += f.segment<3>(3 * n);
        }
        scene.net_force_[i] = net.norm();
        report.applied_force += scene.net_force_[i];
    }
    report.phase_seconds[2] = seconds_since(phase);

    // 4. Integration and linear solves, rolled back per body on failure.
    phase = Clock::now();
    for (std::size_t i = 0; i < nb; ++i) {
        auto& b = scene.bodies[i];
        try {
            if (b.rigid) {
                auto& rb = b.rigid_body;
                const RigidBodyState backup = rb.state;
                try {
                    step_rigid(rb.state, wrenches[i], frame_stiffness[i], dt, rb.damping);
                    if (rb.articulation) rb.articulation->forward_kinematics(rb.joint_values, rb.state.frames);
                    for (const auto& f : rb.state.frames)
                        if (!f.translation.allFinite() || !f.orientation.coeffs().allFinite())
                            throw SolverError("rigid body state became non-finite");
                } catch (...) {
                    rb.state = backup;
                    throw;
                }
            } else {
                auto& sb = b.soft;
                const SoftBodyState backup = sb.state;
                try {
                    ForceModel* model = sb.fem ? static_cast<ForceModel*>(sb.fem.get()) : sb.springs.get();
                    if (sb.solver.integrator == IntegratorKind::implicit_euler) {
                        std::vector<ForceModel*> models{model};
                        if (!sb.anchors.anchors().empty()) models.push_back(&sb.anchors);
                        if (!sb.proxies.links().empty()) models.push_back(&sb.proxies);
                        const auto stats = step_implicit_euler(sb.state, models, external[i], dt, sb.solver,
                                                               {sb.mechanics.rayleigh_mass, sb.mechanics.rayleigh_stiffness});
                        report.solver_iterations += stats.iterations;
                    } else {
                        VecX f = external[i];
                        model->add_forces(sb.state, f);
                        sb.anchors.add_forces(sb.state, f);
                        sb.proxies.add_forces(sb.state, f);
                        for (Index n = 0; n < sb.state.node_count(); ++n)
                            f.segment<3>(3 * n) -= sb.mechanics.rayleigh_mass * sb.state.masses[n] * sb.state.velocity(n);
                        step_explicit_euler(sb.state, f, dt);
                    }
                    if (!sb.state.x.allFinite() || !sb.state.v.allFinite())
                        throw SolverError("soft body state became non-finite");
                } catch (...) {
                    sb.state = backup;
                    throw;
                }
            }
        } catch (const Error& e) {
            ++report.failures;
            scene.events.post(EventKind::error, scene.time_,
                              std::string("body '") + b.name + "' rolled back at step " +
                                  std::to_string(scene.steps_) + ": " + e.what());
        }
    }
    // Tearing happens on the integrated state, inside the exclusive phase.
    for (std::size_t i = 0; i < nb; ++i) {
        auto& b = scene.bodies[i];
        if (b.rigid || !b.soft.topology) continue;
        auto& sb = b.soft;
        const auto rec = sb.topology->rupture_step(scene.steps_, sb.state, *sb.fem);
        report.separated_faces += rec.faces.size();
        report.duplicated_nodes += rec.duplicated.size();
        if (!rec.duplicated.empty() && sb.collision)
            scene.collision.rebind_soft(*sb.collision, sb.topology->boundary(), sb.state.node_count());
    }
    report.phase_seconds[3] = seconds_since(phase);

    // 5. Haptic feedback: the coupling reaction felt at each device.
    phase = Clock::now();
    for (auto& d : scene.devices) {
        const auto& rb = scene.bodies[d.body].rigid_body;
        const Wrench w = coupling_wrench(d.pose, rb.state.frames[d.frame], d.config.linear_stiffness,
                                         d.config.angular_stiffness);
        d.feedback.force = -w.force;
        d.feedback.torque = -w.torque;
    }
    report.phase_seconds[4] = seconds_since(phase);

    ++scene.steps_;
    scene.time_ += dt;
    scene.publish_snapshot();
    report.time = scene.time_;
    report.snapshot = scene.snapshot();
    report.checksum = report.snapshot->checksum;
    report.wall_seconds = seconds_since(start);
    scene.events.post(EventKind::physics_update, scene.time_, report);
    return report;
}

// ---------------------------------------------------------------------------

std::uint64_t mapping_sync(Scene& scene) {
    const auto snap = scene.snapshot();
    std::vector<Vec3> base;
    for (auto& v : scene.visuals) {
        const auto& body = scene.bodies[v.body];
        if (body.rigid) {
            const auto& pose = snap->frames[v.body][0];
            base.resize(v.local.size());
            for (std::size_t i = 0; i < v.local.size(); ++i) base[i] = pose.apply(v.local[i]);
            scene.transforms.map_to_frame(v.transform, pose);
        } else {
            const VecX& x = snap->positions[v.body];
            switch (v.scheme) {
                case MappingScheme::identity:
                    base.resize(v.visual->base().vertices.size());
                    for (std::size_t i = 0; i < base.size(); ++i) base[i] = x.segment<3>(3 * i);
                    break;
                case MappingScheme::barycentric:
                    v.map.apply(body.soft.rest.tets, x, 0, base);
                    break;
                case MappingScheme::dynamic_barycentric: {
                    const auto& topo = *snap->topologies[v.body];
                    try {
                        v.dynamic->map.apply(topo.mesh().tets, x, topo.version(), base);
                    } catch (const StaleMapError&) {
                        propagate_topology(topo, *v.dynamic);
                        v.visual->rebuild(v.dynamic->mesh);
                        v.dynamic->map.apply(topo.mesh().tets, x, topo.version(), base);
                    }
                    break;
                }
                case MappingScheme::rigid_frame:
                    break;
            }
        }
        v.visual->update(base);
        v.synced_step = snap->step;
        v.synced = true;
    }
    scene.events.post(EventKind::visual_update, snap->time, snap->step);
    return snap->step;
}

EventDispatcher::ObserverId attach_tracker(Scene& scene, const std::string& body, MetricTracker& tracker) {
    const Index idx = scene.body_index(body);
    if (idx < 0) throw ConfigError("metric tracker: unknown body '" + body + "'");
    const bool rigid = scene.bodies[idx].rigid;
    const auto id = scene.events.attach(EventKind::physics_update, [idx, rigid, &tracker](const Event& e) {
        const auto& report = std::any_cast<const StepReport&>(e.payload);
        const auto& snap = *report.snapshot;
        if (rigid)
            tracker.record(snap.time, snap.frames[idx][0], snap.net_force[idx]);
        else
            tracker.record(snap.time, snap.positions[idx], snap.net_force[idx]);
    });
    Scene* s = &scene;
    scene.events.attach(EventKind::simulation_stop, [s, &tracker, body](const Event& e) {
        if (tracker.enabled() && !tracker.flush())
            s->events.post(EventKind::error, e.timestamp,
                           std::string("metric tracker for '") + body + "' could not write its records; disabled");
    });
    return id;
}

// ---------------------------------------------------------------------------

RunResult run_deterministic(Scene& scene, std::uint64_t steps) {
    if (steps == 0) throw ConfigError("run needs at least one step");
    RunResult out;
    SchedulerConfig sched = scene.config.scheduler;
    sched.deterministic = true;
    sched.max_steps = steps;
    const double sync_interval = 1.0 / scene.config.visual_rate;
    double next_sync = scene.time();
    scene.events.post(EventKind::simulation_start, scene.time());
    out.loop = PhysicsLoop(sched).run([&](std::uint64_t, double dt) {
        const auto report = physics_tick(scene, dt);
        out.checksums.push_back(report.checksum);
        if (scene.time() + 1e-12 >= next_sync) {
            out.synced_steps.push_back(mapping_sync(scene));
            next_sync += sync_interval;
        }
        scene.events.dispatch_pending();
    });
    scene.events.post(EventKind::simulation_stop, scene.time());
    scene.events.dispatch_pending();
    return out;
}

RunResult run_realtime(Scene& scene, const SchedulerConfig& scheduler) {
    if (!scheduler.max_steps) throw ConfigError("a real-time run needs max_steps");
    if (scheduler.deterministic) return run_deterministic(scene, *scheduler.max_steps);
    RunResult out;
    out.checksums.reserve(*scheduler.max_steps);
    std::atomic<bool> done{false};
    std::mutex synced_mutex;

    scene.events.start();
    scene.events.post(EventKind::simulation_start, scene.time());

    std::thread visual([&] {
        const auto interval = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(1.0 / scene.config.visual_rate));
        auto next = Clock::now();
        while (!done.load(std::memory_order_acquire)) {
            next += interval;
            std::this_thread::sleep_until(next);
            if (Clock::now() - next > interval) next = Clock::now();
            const auto step = mapping_sync(scene);
            std::lock_guard lock(synced_mutex);
            out.synced_steps.push_back(step);
        }
    });
    std::thread physics([&] {
        PhysicsLoop loop(scheduler);
        out.loop = loop.run([&](std::uint64_t, double dt) { out.checksums.push_back(physics_tick(scene, dt).checksum); });
        done.store(true, std::memory_order_release);
    });
    physics.join();
    visual.join();
    out.synced_steps.push_back(mapping_sync(scene));
    scene.events.post(EventKind::simulation_stop, scene.time());
    scene.events.stop();
    return out;
}

}  // namespace rtsim
