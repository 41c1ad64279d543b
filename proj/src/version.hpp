#pragma once

#define MUZE_VERSION "0.1.0"
