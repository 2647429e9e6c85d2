# ANLS / accuracy evaluation
