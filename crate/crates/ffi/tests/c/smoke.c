#include <stdio.h>
#include <string.h>

#include "groundkit.h"

#define CHECK(cond)                                                  \
    do {                                                             \
        if (!(cond)) {                                               \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,  \
                    #cond, gk_last_error_message());                 \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    GkAction *action = NULL;
    CHECK(gk_action_parse("CLICK <point>[[500, 250]]</point>", GK_DIALECT_TAGGED, &action) == GK_STATUS_OK);

    GkPoint p;
    CHECK(gk_action_point(action, &p) == GK_STATUS_OK);
    CHECK(p.x == 500 && p.y == 250);

    char *pair = NULL;
    CHECK(gk_action_serialize(action, GK_DIALECT_PAIR, &pair) == GK_STATUS_OK);
    CHECK(strcmp(pair, "CLICK <|box_start|>(500,250)<|box_end|>") == 0);
    gk_string_free(pair);
    gk_action_free(action);

    CHECK(gk_action_parse("CLICK <point>[[1001, 0]]</point>", GK_DIALECT_TAGGED, &action) != GK_STATUS_OK);
    CHECK(strlen(gk_last_error_message()) > 0);

    GkBox a = {0, 0, 100, 100}, b = {50, 0, 150, 100};
    double iou = 0.0;
    CHECK(gk_iou(a, b, &iou) == GK_STATUS_OK);
    CHECK(iou > 0.3333 && iou < 0.3334);

    bool ok = false;
    CHECK(gk_text_correct("open settings", "open the settings", &ok) == GK_STATUS_OK && ok);

    printf("ok %s\n", gk_version());
    return 0;
}
