#pragma once

namespace musedit {
class GuidanceEmbedder;
}
