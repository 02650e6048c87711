// Command-line front end. Every subcommand prints one JSON object on stdout.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pda/align_metrics.hpp"
#include "pda/error.hpp"
#include "pda/frame_select.hpp"
#include "pda/io.hpp"
#include "pda/lidar_sim.hpp"
#include "pda/scene.hpp"
#include "pda/train.hpp"
#include "pda/tsdf.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pda;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Resolution {
    std::size_t height = 0;
    std::size_t width = 0;
};

Resolution parse_resolution(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw ConfigError("--resolution must look like HxW, got '" + text + "'");
    try {
        std::size_t used = 0;
        const auto h = std::stoul(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument("h");
        const std::string rest = text.substr(x + 1);
        const auto w = std::stoul(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("w");
        if (h == 0 || w == 0) throw std::invalid_argument("zero");
        return {h, w};
    } catch (const std::logic_error&) {
        throw ConfigError("--resolution must look like HxW, got '" + text + "'");
    }
}

std::string frame_name(const std::string& prefix, std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04zu", i);
    return prefix + buf + ext;
}

// --- configuration ------------------------------------------------------------

template <typename T>
void take(const json& obj, const char* key, T& out, std::set<std::string>& seen) {
    seen.insert(key);
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!seen.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

NetConfig net_from_json(const json& j, NetConfig c) {
    std::set<std::string> seen;
    take(j, "height", c.height, seen);
    take(j, "width", c.width, seen);
    take(j, "patch", c.patch, seen);
    take(j, "embed", c.embed, seen);
    take(j, "stages", c.stages, seen);
    take(j, "blocks_per_stage", c.blocks_per_stage, seen);
    take(j, "heads", c.heads, seen);
    take(j, "mlp_hidden", c.mlp_hidden, seen);
    take(j, "stage_dims", c.stage_dims, seen);
    take(j, "features", c.features, seen);
    take(j, "head_hidden", c.head_hidden, seen);
    take(j, "fusion_hidden", c.fusion_hidden, seen);
    take(j, "fusion_stages", c.fusion_stages, seen);
    reject_unknown(j, seen, "net config");
    return c;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    std::set<std::string> seen;
    seen.insert("net");
    if (j.contains("net")) c.net = net_from_json(j.at("net"), c.net);
    take(j, "warmup_steps", c.warmup_steps, seen);
    take(j, "main_steps", c.main_steps, seen);
    take(j, "batch", c.batch, seen);
    take(j, "lr_backbone", c.optim.lr_backbone, seen);
    take(j, "lr_other", c.optim.lr_other, seen);
    take(j, "weight_decay", c.optim.weight_decay, seen);
    take(j, "lambda", c.lambda, seen);
    take(j, "seed", c.seed, seen);
    take(j, "scene_count", c.scene_count, seen);
    take(j, "prompted", c.prompted, seen);
    take(j, "scale_min", c.scale_min, seen);
    take(j, "scale_max", c.scale_max, seen);
    std::string source = "anchor";
    take(j, "prompt_source", source, seen);
    if (source == "anchor") c.prompt_source = PromptSource::anchor;
    else if (source == "naive") c.prompt_source = PromptSource::naive;
    else throw ConfigError("prompt_source must be 'anchor' or 'naive'");
    reject_unknown(j, seen, "train config");
    return c;
}

TrainConfig load_train_config(const std::string& path) {
    if (path.empty()) return {};
    try {
        return train_config_from_json(json::parse(io::read_text(path)));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

json metrics_json(const DepthMetrics& m) {
    return {{"l1", m.l1}, {"rmse", m.rmse}, {"absrel", m.absrel}, {"delta05", m.delta05}};
}

// --- subcommands ----------------------------------------------------------------

struct Options {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string resolution;
    double voxel_size = kDefaultVoxelSize;
    double tau = kDefaultTau;
    std::optional<double> lambda;

    std::size_t frames = 8;
    std::string data;
    std::string prefix = "depth";
    std::string rgb, depth, prompt, pred, gt, ref, checkpoint;
    double fps = 30.0;
    bool naive = false;
    std::string method = "ransac";
    bool quiet = false;
};

json cmd_gen_data(const Options& o) {
    const Resolution res = o.resolution.empty() ? Resolution{64, 96} : parse_resolution(o.resolution);
    if (o.out.empty()) throw ConfigError("gen-data needs --out");
    if (o.frames == 0) throw ConfigError("--frames must be positive");
    fs::create_directories(o.out);
    const Scene scene = gen_scene(o.seed);
    std::mt19937_64 rng(o.seed);
    std::vector<Eigen::Matrix4d> poses;
    CameraModel cam;
    for (std::size_t i = 0; i < o.frames; ++i) {
        cam = sample_view(scene, rng, res.width, res.height);
        const Frame f = render_frame(scene, cam);
        const PromptDepth prompt = simulate_lidar(f.depth, f.rgb, o.seed * 1000003 + i);
        io::write_ppm(fs::path(o.out) / frame_name("rgb", i, ".ppm"), f.rgb);
        io::write_pfm(fs::path(o.out) / frame_name("depth", i, ".pfm"), f.depth);
        io::write_pfm(fs::path(o.out) / frame_name("prompt", i, ".pfm"), prompt.depth);
        poses.push_back(cam.pose);
    }
    io::write_poses(fs::path(o.out) / "poses.txt", poses);
    io::write_intrinsics(fs::path(o.out) / "intrinsics.txt", cam);
    return {{"frames", o.frames}, {"scale", scene.scale}, {"height", res.height}, {"width", res.width},
            {"out", o.out}};
}

json cmd_simulate_lidar(const Options& o) {
    if (o.depth.empty() || o.rgb.empty() || o.out.empty()) throw ConfigError("simulate-lidar needs --depth, --rgb and --out");
    const DepthMap gt = io::read_pfm(o.depth);
    const Image rgb = io::read_ppm(o.rgb);
    LidarSimOptions opt;
    if (!o.resolution.empty()) {
        const Resolution r = parse_resolution(o.resolution);
        opt.prompt_height = r.height;
        opt.prompt_width = r.width;
    }
    PromptDepth prompt;
    if (o.naive) {
        prompt = naive_downsample(gt, opt.prompt_height ? opt.prompt_height : std::max<std::size_t>(1, gt.height / 2),
                                  opt.prompt_width ? opt.prompt_width : std::max<std::size_t>(1, gt.width / 2));
    } else {
        prompt = simulate_lidar(gt, rgb, o.seed, opt);
    }
    io::write_pfm(o.out, prompt.depth);
    return {{"height", prompt.depth.height}, {"width", prompt.depth.width}, {"naive", o.naive}, {"out", o.out}};
}

json cmd_select_frames(const Options& o) {
    if (o.data.empty()) throw ConfigError("select-frames needs --frames-dir");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.data)) {
        if (entry.path().extension() == ".ppm") files.push_back(entry.path());
    }
    if (files.empty()) throw InputError("select-frames: no .ppm frames in " + o.data);
    std::sort(files.begin(), files.end());
    std::vector<FrameScore> scores;
    for (std::size_t i = 0; i < files.size(); ++i) scores.push_back({i, laplacian_variance(io::read_ppm(files[i]))});
    const auto picks = select_sharp_frames(scores, o.fps);
    json names = json::array();
    for (std::size_t p : picks) names.push_back(files[p].filename().string());
    return {{"picks", picks}, {"files", names}, {"count", files.size()}};
}

json cmd_train(const Options& o) {
    TrainConfig c = load_train_config(o.config);
    c.seed = o.seed;
    if (o.lambda) c.lambda = *o.lambda;
    if (!o.resolution.empty()) {
        const Resolution r = parse_resolution(o.resolution);
        c.net.height = r.height;
        c.net.width = r.width;
    }
    if (o.out.empty()) throw ConfigError("train needs --out");
    TrainLogger logger;
    if (!o.quiet) {
        logger = [](std::size_t step, const char* phase, double loss) {
            if (step % 100 == 0) std::cerr << phase << " step " << step << " loss " << loss << "\n";
        };
    }
    const TrainResult r = train(c, logger);
    write_checkpoint(o.out, to_checkpoint(r.model, r.meta));
    json j{{"checkpoint", o.out},
           {"steps", r.losses.size()},
           {"lambda", r.meta.lambda},
           {"lr_backbone", r.meta.lr_backbone},
           {"lr_other", r.meta.lr_other},
           {"prompted", r.meta.prompted}};
    if (!r.losses.empty()) j["final_loss"] = r.losses.back();
    return j;
}

json cmd_infer(const Options& o) {
    if (o.checkpoint.empty() || o.rgb.empty() || o.prompt.empty() || o.out.empty()) {
        throw ConfigError("infer needs --checkpoint, --rgb, --prompt and --out");
    }
    const Checkpoint ck = read_checkpoint(o.checkpoint);
    const DepthMap pred = infer(ck, io::read_ppm(o.rgb), PromptDepth{io::read_pfm(o.prompt)});
    io::write_pfm(o.out, pred);
    return {{"out", o.out}, {"height", pred.height}, {"width", pred.width}};
}

json cmd_align(const Options& o) {
    if (o.pred.empty() || o.ref.empty()) throw ConfigError("align needs --pred and --ref");
    const DepthMap pred = io::read_pfm(o.pred);
    const DepthMap ref = io::read_pfm(o.ref);
    ScaleShift s;
    if (o.method == "ransac") s = ransac_scale_shift(pred, ref, {64, 5, o.seed});
    else if (o.method == "polyfit") s = polyfit_align(pred, ref);
    else throw ConfigError("--method must be 'ransac' or 'polyfit'");
    json j{{"scale", s.scale}, {"shift", s.shift}, {"method", o.method}};
    if (o.method == "ransac") j["inliers"] = s.inlier_count;
    if (!o.out.empty()) {
        io::write_pfm(o.out, s.apply(pred));
        j["out"] = o.out;
    }
    return j;
}

json cmd_eval_depth(const Options& o) {
    if (o.pred.empty() || o.gt.empty()) throw ConfigError("eval-depth needs --pred and --gt");
    DepthMap pred = io::read_pfm(o.pred);
    const DepthMap gt = io::read_pfm(o.gt);
    if (!pred.same_size(gt)) pred = resize_nearest(pred, gt.height, gt.width);
    return metrics_json(depth_metrics(pred, gt));
}

json cmd_fuse_tsdf(const Options& o) {
    if (o.data.empty() || o.out.empty()) throw ConfigError("fuse-tsdf needs --data and --out");
    const fs::path dir(o.data);
    const CameraModel intrinsics = io::read_intrinsics(dir / "intrinsics.txt");
    const auto poses = io::read_poses(dir / "poses.txt");
    std::vector<DepthMap> maps;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        DepthMap d = io::read_pfm(dir / frame_name(o.prefix, i, ".pfm"));
        if (d.height != intrinsics.height || d.width != intrinsics.width) {
            d = resize_nearest(d, intrinsics.height, intrinsics.width);
        }
        maps.push_back(std::move(d));
    }
    // Volume bounds from the back-projected depth, padded by the truncation band.
    const double trunc = default_truncation(o.voxel_size);
    Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
    Point3 hi = -lo;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        CameraModel cam = intrinsics;
        cam.pose = poses[i];
        cam.validate();
        for (std::size_t r = 0; r < cam.height; ++r) {
            for (std::size_t c = 0; c < cam.width; ++c) {
                if (!maps[i].is_valid(r, c) || !(maps[i].at(r, c) > 0.0)) continue;
                const Point3 p = cam.camera_to_world(cam.ray_camera(double(c), double(r)) * maps[i].at(r, c));
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
        }
    }
    if (!lo.allFinite()) throw InputError("fuse-tsdf: no valid depth in " + o.data);
    lo.array() -= 2.0 * trunc;
    hi.array() += 2.0 * trunc;
    const Point3 span = (hi - lo) / o.voxel_size;
    if (span.prod() > 4e8) throw ParameterError("fuse-tsdf: volume too large for this voxel size");
    TsdfVolume vol = TsdfVolume::covering(lo, hi, o.voxel_size);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        CameraModel cam = intrinsics;
        cam.pose = poses[i];
        vol.integrate(maps[i], cam, trunc);
    }
    const PointCloud pts = extract_points(vol);
    io::write_points(o.out, pts);
    return {{"points", pts.size()}, {"frames", poses.size()}, {"voxel_size", o.voxel_size}, {"out", o.out}};
}

json cmd_eval_recon(const Options& o) {
    if (o.pred.empty() || o.gt.empty()) throw ConfigError("eval-recon needs --pred and --gt");
    const ReconMetrics m = recon_metrics(io::read_points(o.pred), io::read_points(o.gt), o.tau);
    return {{"acc", m.acc}, {"comp", m.comp}, {"prec", m.prec}, {"recall", m.recall}, {"fscore", m.fscore},
            {"tau", o.tau}};
}

json cmd_flops(const Options& o) {
    NetConfig net = load_train_config(o.config).net;
    if (!o.resolution.empty()) {
        const Resolution r = parse_resolution(o.resolution);
        net.height = r.height;
        net.width = r.width;
    }
    const FlopsReport rep = measure_flops(net);
    return {{"base", rep.base}, {"prompted", rep.prompted}, {"overhead", rep.ratio}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt-guided depth toolkit"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON configuration file");
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--out", o.out, "output path");
        sub->add_option("--resolution", o.resolution, "HxW");
    };

    auto* gen = app.add_subcommand("gen-data", "render a procedural scene sequence with prompts");
    common(gen);
    gen->add_option("--frames", o.frames, "number of views");

    auto* sim = app.add_subcommand("simulate-lidar", "simulate a low-resolution LiDAR prompt");
    common(sim);
    sim->add_option("--depth", o.depth, "ground-truth depth (PFM)")->required();
    sim->add_option("--rgb", o.rgb, "registered image (PPM)")->required();
    sim->add_flag("--naive", o.naive, "plain bilinear downsample instead");

    auto* sel = app.add_subcommand("select-frames", "pick sharp frames from an image sequence");
    common(sel);
    sel->add_option("--frames-dir", o.data, "directory of .ppm frames")->required();
    sel->add_option("--fps", o.fps, "frame rate");

    auto* tr = app.add_subcommand("train", "two-phase training on procedural scenes");
    common(tr);
    tr->add_option("--lambda", o.lambda, "gradient-loss weight");
    tr->add_flag("--quiet", o.quiet, "no progress on stderr");

    auto* inf = app.add_subcommand("infer", "metric depth from an image and a prompt");
    common(inf);
    inf->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
    inf->add_option("--rgb", o.rgb, "image (PPM)")->required();
    inf->add_option("--prompt", o.prompt, "prompt depth (PFM)")->required();

    auto* al = app.add_subcommand("align", "scale/shift alignment of a depth map to a reference");
    common(al);
    al->add_option("--pred", o.pred, "depth to align (PFM)")->required();
    al->add_option("--ref", o.ref, "reference depth (PFM)")->required();
    al->add_option("--method", o.method, "ransac or polyfit");

    auto* ed = app.add_subcommand("eval-depth", "depth metrics");
    common(ed);
    ed->add_option("--pred", o.pred, "prediction (PFM)")->required();
    ed->add_option("--gt", o.gt, "ground truth (PFM)")->required();

    auto* fu = app.add_subcommand("fuse-tsdf", "TSDF fusion of a posed depth sequence into surface points");
    common(fu);
    fu->add_option("--data", o.data, "directory with poses.txt, intrinsics.txt and depth maps")->required();
    fu->add_option("--prefix", o.prefix, "depth file prefix (<prefix>_0000.pfm)");
    fu->add_option("--voxel-size", o.voxel_size, "voxel size in meters");

    auto* er = app.add_subcommand("eval-recon", "point-cloud reconstruction metrics");
    common(er);
    er->add_option("--pred", o.pred, "reconstructed points")->required();
    er->add_option("--gt", o.gt, "reference points")->required();
    er->add_option("--tau", o.tau, "distance threshold in meters");

    auto* fl = app.add_subcommand("flops", "FLOPs of the base and prompted forward passes");
    common(fl);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        json result;
        if (*gen) result = cmd_gen_data(o);
        else if (*sim) result = cmd_simulate_lidar(o);
        else if (*sel) result = cmd_select_frames(o);
        else if (*tr) result = cmd_train(o);
        else if (*inf) result = cmd_infer(o);
        else if (*al) result = cmd_align(o);
        else if (*ed) result = cmd_eval_depth(o);
        else if (*fu) result = cmd_fuse_tsdf(o);
        else if (*er) result = cmd_eval_recon(o);
        else if (*fl) result = cmd_flops(o);
        std::cout << result.dump(2) << "\n";
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const AlignmentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
