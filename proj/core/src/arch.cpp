#include "bayatt/arch.hpp"

#include <sstream>

#include "bayatt/error.hpp"

namespace bayatt {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  fail(ErrorCode::parse, "unknown activation: " + s);
}

std::string to_string(ArchKind k) { return k == ArchKind::mlp ? "mlp" : "conv"; }

void ArchSpec::validate() const {
  require_contract(!hidden.empty(), "ArchSpec: at least one hidden layer required");
  require_contract(classes >= 2, "ArchSpec: class count must be >= 2");
  require_contract(!input_shape.empty() && input_size() > 0, "ArchSpec: empty input shape");
  for (std::size_t hsz : hidden) require_contract(hsz > 0, "ArchSpec: zero-width layer");
  if (kind == ArchKind::convnet) {
    require_contract(input_shape.size() == 3, "ArchSpec: convnet input must be [c,h,w]");
    // Every conv layer (3x3, stride 2) must leave a positive spatial extent.
    std::size_t h = input_shape[1], w = input_shape[2];
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      require_contract(h >= 3 && w >= 3, "ArchSpec: input too small for conv stack");
      h = (h - 3) / 2 + 1;
      w = (w - 3) / 2 + 1;
    }
  }
}

namespace {

struct ConvDims {
  std::size_t h, w;
};

ConvDims conv_output_dims(const ArchSpec& arch) {
  std::size_t h = arch.input_shape[1], w = arch.input_shape[2];
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
    h = (h - 3) / 2 + 1;
    w = (w - 3) / 2 + 1;
  }
  return {h, w};
}

}  // namespace

std::vector<ParamSegment> param_layout(const ArchSpec& arch) {
  arch.validate();
  std::vector<ParamSegment> segs;
  std::size_t offset = 0;
  auto push = [&](std::string name, Tensor::Shape shape) {
    const std::size_t len = Tensor::shape_size(shape);
    segs.push_back(ParamSegment{std::move(name), offset, len, std::move(shape)});
    offset += len;
  };
  if (arch.kind == ArchKind::mlp) {
    std::size_t in = arch.input_size();
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
      push("fc" + std::to_string(i) + ".w", {in, arch.hidden[i]});
      push("fc" + std::to_string(i) + ".b", {arch.hidden[i]});
      in = arch.hidden[i];
    }
    push("head.w", {in, arch.classes});
    push("head.b", {arch.classes});
  } else {
    std::size_t in_ch = arch.input_shape[0];
    for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
      push("conv" + std::to_string(i) + ".w", {arch.hidden[i], in_ch, 3, 3});
      push("conv" + std::to_string(i) + ".b", {arch.hidden[i]});
      in_ch = arch.hidden[i];
    }
    const ConvDims dims = conv_output_dims(arch);
    push("head.w", {in_ch * dims.h * dims.w, arch.classes});
    push("head.b", {arch.classes});
  }
  return segs;
}

std::size_t ArchSpec::param_count() const {
  const auto segs = param_layout(*this);
  return segs.back().offset + segs.back().length;
}

std::string ArchSpec::to_string() const {
  std::ostringstream os;
  os << bayatt::to_string(kind) << ':';
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) os << '-';
    os << hidden[i];
  }
  os << '@' << bayatt::to_string(activation) << '[';
  for (std::size_t i = 0; i < input_shape.size(); ++i) {
    if (i) os << 'x';
    os << input_shape[i];
  }
  os << "->" << classes << ']';
  return os.str();
}

ArchSpec ArchSpec::parse(const std::string& text) {
  ArchSpec spec;
  const auto colon = text.find(':');
  require(colon != std::string::npos, ErrorCode::parse, "ArchSpec: missing ':' in " + text);
  const std::string kind = text.substr(0, colon);
  if (kind == "mlp")
    spec.kind = ArchKind::mlp;
  else if (kind == "conv" || kind == "convnet")
    spec.kind = ArchKind::convnet;
  else
    fail(ErrorCode::parse, "ArchSpec: unknown kind: " + kind);

  std::string rest = text.substr(colon + 1);
  std::string widths = rest, meta;
  const auto at = rest.find('@');
  if (at != std::string::npos) {
    widths = rest.substr(0, at);
    meta = rest.substr(at + 1);
  }
  std::istringstream ws(widths);
  std::string tok;
  while (std::getline(ws, tok, '-')) {
    if (tok.empty()) fail(ErrorCode::parse, "ArchSpec: empty width in " + text);
    spec.hidden.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  if (!meta.empty()) {
    std::string act = meta;
    const auto br = meta.find('[');
    if (br != std::string::npos) {
      act = meta.substr(0, br);
      const auto arrow = meta.find("->", br);
      const auto close = meta.find(']', br);
      require(arrow != std::string::npos && close != std::string::npos, ErrorCode::parse,
              "ArchSpec: malformed shape suffix in " + text);
      std::istringstream ss(meta.substr(br + 1, arrow - br - 1));
      while (std::getline(ss, tok, 'x'))
        spec.input_shape.push_back(static_cast<std::size_t>(std::stoull(tok)));
      spec.classes = static_cast<std::size_t>(std::stoull(meta.substr(arrow + 2, close - arrow - 2)));
    }
    if (!act.empty()) spec.activation = activation_from_string(act);
  }
  return spec;
}

}  // namespace bayatt
